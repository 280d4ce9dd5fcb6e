//! Reverse-mode differentiation over a small set of dense tensor operators,
//! the flat parameter store, and the mixed supernet forward pass.

mod graph;
mod mixed;
mod params;
mod tensor;

pub use graph::{sigmoid, Graph, Var};
pub use mixed::{apply_operator, forward_mixed, Batch, ForwardPass};
pub use params::{Checkpoint, InitConfig, ParamKind, ParamLayout, ParamStore};
pub use tensor::Tensor;

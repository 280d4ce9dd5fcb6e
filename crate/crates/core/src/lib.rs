pub mod analysis;
pub mod autodiff;
pub mod cost;
pub mod data;
pub mod error;
pub mod experiment;
pub mod interleave;
pub mod search;
pub mod space;

pub use analysis::{count_space, ComplexityReport, Formula, TrajectorySummary};
pub use autodiff::{ParamStore, Tensor};
pub use data::{DataConfig, Dataset};
pub use error::{Error, Result};
pub use interleave::{MaskLabel, SampleMask, Schedule};
pub use search::{run_search, RunReport, SearchConfig};
pub use space::{Connection, DiscreteArchitecture, OperatorKind, StageSpec, Supernet, SupernetSpec};

//! The mixed supernet forward pass.
//!
//! A searched node sums its active inputs, each scaled by the edge gate and
//! carrying the gated sum of its surviving operators:
//!
//! `x_j = Σ_(i,j) g(β_ij) · Σ_o g(α_ij^o) · o(x_i)`
//!
//! with `g` the logistic sigmoid. Parametric operators end in a batch
//! normalisation without affine terms. The stage output passes through the
//! fixed reduction unit (ReLU, stride-2 pointwise `C -> 2C`, batch
//! normalisation) and the last stage
//! feeds global average pooling and an affine classifier.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::interleave::SampleMask;
use crate::search::{regularizer, RegularizerValue, RegularizerWeights};
use crate::space::{Connection, OperatorKind, Pruned};

/// Inputs `(batch, C, H, W)` matching the first stage, with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

fn op_with_weights(
    g: &mut Graph,
    kind: OperatorKind,
    x: Var,
    weights: &[Var],
) -> Result<Var> {
    match kind {
        OperatorKind::Skip => Ok(x),
        OperatorKind::SepConv3x3 => {
            let h = g.relu(x)?;
            let h = g.depthwise3x3(h, weights[0])?;
            let h = g.pointwise(h, weights[1], 1)?;
            g.batch_norm(h)
        }
        OperatorKind::ToyLinear => {
            let [_, c, hh, ww] = g.value(x).shape();
            let h = g.relu(x)?;
            let h = g.dense(h, weights[0], weights[1], [c, hh, ww])?;
            g.batch_norm(h)
        }
    }
}

fn weight_shapes(kind: OperatorKind, channels: usize, spatial: usize) -> Vec<[usize; 4]> {
    match kind {
        OperatorKind::Skip => vec![],
        OperatorKind::SepConv3x3 => vec![[channels, 1, 3, 3], [channels, channels, 1, 1]],
        OperatorKind::ToyLinear => {
            let f = channels * spatial * spatial;
            vec![[f, f, 1, 1], [f, 1, 1, 1]]
        }
    }
}

/// Evaluates one operator on `x` with the flat weight block `omega`.
pub fn apply_operator(kind: OperatorKind, x: &Tensor, omega: &[f64]) -> Result<Tensor> {
    let [_, c, h, w] = x.shape();
    if h != w {
        return Err(Error::shape("apply_operator", format!("feature maps must be square, got {h}x{w}")));
    }
    let shapes = weight_shapes(kind, c, h);
    let need: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if need != omega.len() {
        return Err(Error::shape(
            "apply_operator",
            format!("{kind} on {:?} needs {need} weights, got {}", x.shape(), omega.len()),
        ));
    }
    let mut g = Graph::detached();
    let xv = g.constant(x.clone())?;
    let mut weights = Vec::new();
    let mut at = 0;
    for s in shapes {
        let n: usize = s.iter().product();
        weights.push(g.constant(Tensor::from_vec(s, omega[at..at + n].to_vec())?)?);
        at += n;
    }
    let y = op_with_weights(&mut g, kind, xv, &weights)?;
    Ok(g.value(y).clone())
}

fn op_on_graph(g: &mut Graph, store: &ParamStore, kind: OperatorKind, x: Var, c: Connection) -> Result<Var> {
    let st = &store.spec().stages[c.stage];
    let range = store.omega_range(c, kind);
    let mut at = range.start;
    let mut weights = Vec::new();
    for s in weight_shapes(kind, st.channels, st.spatial_size) {
        weights.push(g.param(store, at, s)?);
        at += s.iter().product::<usize>();
    }
    op_with_weights(g, kind, x, &weights)
}

/// A recorded forward pass, ready for [`ForwardPass::backward`].
pub struct ForwardPass {
    pub graph: Graph,
    pub logits: Var,
    pub cross_entropy: Var,
    pub regularizer: Option<RegularizerValue>,
}

impl ForwardPass {
    pub fn cross_entropy_value(&self) -> f64 {
        self.graph.value(self.cross_entropy).item()
    }

    /// Cross-entropy plus the regularizer term, if enabled.
    pub fn loss(&self) -> f64 {
        self.cross_entropy_value() + self.regularizer.as_ref().map_or(0.0, |r| r.value)
    }

    pub fn logits(&self) -> &Tensor {
        self.graph.value(self.logits)
    }

    /// Exact gradients of [`Self::loss`] for every participating parameter.
    pub fn backward(&self, store: &mut ParamStore) -> Result<()> {
        self.graph.backward(self.cross_entropy, store)?;
        if let Some(reg) = &self.regularizer {
            for &(c, g) in &reg.beta_grads {
                let i = store.beta_offset(c);
                if store.participating()[i] {
                    store.add_grad(i, g);
                }
            }
            for &(c, op, g) in &reg.alpha_grads {
                let i = store.alpha_offset(c, op);
                if store.participating()[i] {
                    store.add_grad(i, g);
                }
            }
        }
        Ok(())
    }
}

/// Runs the supernet restricted to `mask` minus `pruned` on `batch`.
///
/// A node with no active input is absent for this pass and its outgoing
/// connections are skipped. A stage output absent only because of the mask
/// yields zeros; one without any alive input is a structural fault.
pub fn forward_mixed(
    store: &ParamStore,
    mask: &SampleMask,
    pruned: &Pruned,
    batch: &Batch,
    reg: Option<RegularizerWeights>,
) -> Result<ForwardPass> {
    let supernet = store.supernet();
    let spec = supernet.spec();
    let first = &spec.stages[0];
    let [b, c, h, w] = batch.inputs.shape();
    if [c, h, w] != [first.channels, first.spatial_size, first.spatial_size] {
        return Err(Error::shape(
            "forward_mixed",
            format!(
                "inputs {:?} do not match stage 0 ({}, {}, {})",
                batch.inputs.shape(),
                first.channels,
                first.spatial_size,
                first.spatial_size
            ),
        ));
    }
    if batch.labels.len() != b {
        return Err(Error::shape("forward_mixed", format!("{} labels for batch of {b}", batch.labels.len())));
    }

    let mut g = Graph::new(store);
    let mut x = g.constant(batch.inputs.clone())?;
    for (s, st) in spec.stages.iter().enumerate() {
        let n = st.node_count;
        let mut nodes: Vec<Option<Var>> = vec![None; n + 1];
        nodes[0] = Some(x);
        for j in 1..=n {
            let mut terms = Vec::new();
            for conn in supernet.incoming(s, j) {
                if !mask.contains(&conn) || !pruned.edge_alive(spec, conn) {
                    continue;
                }
                let Some(xi) = nodes[conn.source] else { continue };
                let mut op_terms = Vec::new();
                for &op in &spec.operator_set {
                    if !pruned.op_alive(conn, op) {
                        continue;
                    }
                    let y = op_on_graph(&mut g, store, op, xi, conn)?;
                    let a = g.param(store, store.alpha_offset(conn, op), [1, 1, 1, 1])?;
                    let ga = g.sigmoid(a)?;
                    op_terms.push(g.scale(y, ga)?);
                }
                if op_terms.is_empty() {
                    continue;
                }
                let inner = g.sum(op_terms)?;
                let beta = g.param(store, store.beta_offset(conn), [1, 1, 1, 1])?;
                let gb = g.sigmoid(beta)?;
                terms.push(g.scale(inner, gb)?);
            }
            if !terms.is_empty() {
                nodes[j] = Some(g.sum(terms)?);
            }
        }
        let out = match nodes[n] {
            Some(v) => v,
            None => {
                if !supernet.incoming(s, n).any(|c| pruned.edge_alive(spec, c)) {
                    return Err(Error::Structural(format!("stage {s} output has no alive input")));
                }
                g.constant(Tensor::zeros([b, st.channels, st.spatial_size, st.spatial_size]))?
            }
        };
        x = match store.reduction_range(s) {
            Some(r) => {
                let c_out = spec.transition_shape(s).0;
                let wv = g.param(store, r.start, [c_out, st.channels, 1, 1])?;
                let a = g.relu(out)?;
                let r = g.pointwise(a, wv, 2)?;
                g.batch_norm(r)?
            }
            None => out,
        };
    }
    let pooled = g.global_avg_pool(x)?;
    let (hw, hb) = store.head_ranges();
    let last = spec.stages.last().expect("validated spec has stages").channels;
    let wv = g.param(store, hw.start, [spec.num_classes, last, 1, 1])?;
    let bv = g.param(store, hb.start, [spec.num_classes, 1, 1, 1])?;
    let logits = g.dense(pooled, wv, bv, [spec.num_classes, 1, 1])?;
    let ce = g.cross_entropy(logits, &batch.labels)?;
    let regularizer = match reg {
        Some(weights) => Some(regularizer(store, pruned, weights)?),
        None => None,
    };
    Ok(ForwardPass {
        graph: g,
        logits,
        cross_entropy: ce,
        regularizer,
    })
}

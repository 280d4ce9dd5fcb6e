use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, ParamStore};
use crate::error::{Error, Result};
use crate::space::{Connection, OperatorKind, Pruned};

/// Effective factors of the edge and operator terms (already scaled by the
/// growing discretization weight).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerWeights {
    pub mu1: f64,
    pub mu2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularizerValue {
    pub value: f64,
    pub beta_grads: Vec<(Connection, f64)>,
    pub alpha_grads: Vec<(Connection, OperatorKind, f64)>,
}

/// `Σ_k ln(1 + g_k / mean(g))` and its gradient w.r.t. the gate inputs.
///
/// With `m` the mean of `M` gates,
/// `∂/∂g_k = 1/(m + g_k) + (1/M) Σ_i 1/(m + g_i) - 1/m`.
pub(crate) fn polarization(raw: &[f64]) -> (f64, Vec<f64>) {
    let gates: Vec<f64> = raw.iter().map(|&v| sigmoid(v)).collect();
    let n = gates.len() as f64;
    let mean = gates.iter().sum::<f64>() / n;
    let value = gates.iter().map(|g| (1.0 + g / mean).ln()).sum();
    let shared = gates.iter().map(|g| 1.0 / (mean + g)).sum::<f64>() / n - 1.0 / mean;
    let grads = gates
        .iter()
        .map(|g| (1.0 / (mean + g) + shared) * g * (1.0 - g))
        .collect();
    (value, grads)
}

/// The discretization regularizer over unpruned edges (`β` term) and over
/// unpruned operators on unpruned edges (`α` term).
pub fn regularizer(store: &ParamStore, pruned: &Pruned, weights: RegularizerWeights) -> Result<RegularizerValue> {
    let spec = store.spec();
    let edges: Vec<Connection> = store
        .supernet()
        .connections()
        .iter()
        .copied()
        .filter(|&c| pruned.edge_alive(spec, c))
        .collect();
    if edges.is_empty() {
        return Err(Error::Domain("regularizer needs at least one unpruned edge".into()));
    }
    let mut out = RegularizerValue {
        value: 0.0,
        beta_grads: Vec::new(),
        alpha_grads: Vec::new(),
    };
    if weights.mu1 != 0.0 {
        let raw: Vec<f64> = edges.iter().map(|&c| store.beta(c)).collect();
        let (v, g) = polarization(&raw);
        out.value += weights.mu1 * v;
        out.beta_grads = edges.iter().zip(g).map(|(&c, g)| (c, weights.mu1 * g)).collect();
    }
    if weights.mu2 != 0.0 {
        let pairs: Vec<(Connection, OperatorKind)> = edges
            .iter()
            .flat_map(|&c| spec.operator_set.iter().map(move |&o| (c, o)))
            .filter(|&(c, o)| pruned.op_alive(c, o))
            .collect();
        let raw: Vec<f64> = pairs.iter().map(|&(c, o)| store.alpha(c, o)).collect();
        let (v, g) = polarization(&raw);
        out.value += weights.mu2 * v;
        out.alpha_grads = pairs
            .iter()
            .zip(g)
            .map(|(&(c, o), g)| (c, o, weights.mu2 * g))
            .collect();
    }
    Ok(out)
}

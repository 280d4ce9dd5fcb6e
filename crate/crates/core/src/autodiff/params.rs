use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::sigmoid;
use crate::error::{Error, Result};
use crate::space::{build_supernet, Connection, OperatorKind, Supernet, SupernetSpec};

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Beta,
    Alpha,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// Initial raw value of every edge parameter.
    pub beta: f64,
    /// Initial raw value of every operator parameter.
    pub alpha: f64,
    /// Multiplier on the fan-in scaled normal initialisation of weights.
    pub weight_gain: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            beta: 0.0,
            alpha: 0.0,
            weight_gain: 1.0,
        }
    }
}

/// Offsets of every parameter block inside the flat store.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    num_ops: usize,
    num_conns: usize,
    beta: usize,
    alpha: usize,
    omega: Vec<Range<usize>>,
    reductions: Vec<Option<Range<usize>>>,
    head_weight: Range<usize>,
    head_bias: Range<usize>,
    total: usize,
}

impl ParamLayout {
    fn new(supernet: &Supernet) -> Self {
        let spec = supernet.spec();
        let num_ops = spec.operator_set.len();
        let num_conns = supernet.connections().len();
        let beta = 0;
        let alpha = num_conns;
        let mut cursor = alpha + num_conns * num_ops;
        let mut take = |n: usize| {
            let r = cursor..cursor + n;
            cursor += n;
            r
        };
        let mut omega = Vec::with_capacity(num_conns * num_ops);
        for c in supernet.connections() {
            let st = &spec.stages[c.stage];
            for &op in &spec.operator_set {
                omega.push(take(crate::cost::op_params(op, st.channels, st.spatial_size)));
            }
        }
        let reductions = spec
            .stages
            .iter()
            .enumerate()
            .map(|(s, st)| st.reduction_after.then(|| take(st.channels * spec.transition_shape(s).0)))
            .collect();
        let last = spec.stages.last().expect("validated spec has stages").channels;
        let head_weight = take(last * spec.num_classes);
        let head_bias = take(spec.num_classes);
        ParamLayout {
            num_ops,
            num_conns,
            beta,
            alpha,
            omega,
            reductions,
            head_weight,
            head_bias,
            total: cursor,
        }
    }
}

/// Flat storage for network weights and architecture parameters, with
/// gradient slots, keyed by the canonical connection order.
#[derive(Clone, Debug)]
pub struct ParamStore {
    supernet: Supernet,
    layout: ParamLayout,
    values: Vec<f64>,
    grads: Vec<f64>,
    participating: Vec<bool>,
    generation: u64,
}

impl ParamStore {
    pub fn new(supernet: &Supernet, init: &InitConfig, seed: u64) -> Result<Self> {
        let layout = ParamLayout::new(supernet);
        let spec = supernet.spec();
        let mut values = vec![0.0; layout.total];
        values[layout.beta..layout.alpha].fill(init.beta);
        values[layout.alpha..layout.alpha + layout.num_conns * layout.num_ops].fill(init.alpha);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |dst: &mut [f64], std: f64| {
            let normal = Normal::new(0.0, std * init.weight_gain).expect("finite std");
            dst.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        };
        for (ci, c) in supernet.connections().iter().enumerate() {
            let st = &spec.stages[c.stage];
            let ch = st.channels;
            for (oi, &op) in spec.operator_set.iter().enumerate() {
                let block = &mut values[layout.omega[ci * layout.num_ops + oi].clone()];
                match op {
                    OperatorKind::Skip => {}
                    OperatorKind::SepConv3x3 => {
                        let (dw, pw) = block.split_at_mut(9 * ch);
                        fill(dw, (2.0 / 9.0f64).sqrt());
                        fill(pw, (1.0 / ch as f64).sqrt());
                    }
                    OperatorKind::ToyLinear => {
                        let f = ch * st.spatial_size * st.spatial_size;
                        let (w, _bias) = block.split_at_mut(f * f);
                        fill(w, (2.0 / f as f64).sqrt());
                    }
                }
            }
        }
        for (s, r) in layout.reductions.iter().enumerate() {
            if let Some(r) = r {
                fill(&mut values[r.clone()], (2.0 / spec.stages[s].channels as f64).sqrt());
            }
        }
        let last = spec.stages.last().expect("validated spec has stages").channels;
        fill(&mut values[layout.head_weight.clone()], (1.0 / last as f64).sqrt());

        let total = layout.total;
        Ok(ParamStore {
            supernet: supernet.clone(),
            layout,
            values,
            grads: vec![0.0; total],
            participating: vec![false; total],
            generation: next_generation(),
        })
    }

    pub fn supernet(&self) -> &Supernet {
        &self.supernet
    }

    pub fn spec(&self) -> &SupernetSpec {
        self.supernet.spec()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access; invalidates graphs built from the previous values.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.generation = next_generation();
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn participating(&self) -> &[bool] {
        &self.participating
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub(crate) fn zero_grad(&mut self) {
        self.grads.fill(0.0);
        self.participating.fill(false);
    }

    pub(crate) fn mark_participating(&mut self, offset: usize, len: usize) {
        self.participating[offset..offset + len].fill(true);
    }

    pub(crate) fn accumulate_grad(&mut self, offset: usize, g: &[f64]) {
        self.grads[offset..offset + g.len()]
            .iter_mut()
            .zip(g)
            .for_each(|(a, b)| *a += b);
    }

    pub(crate) fn add_grad(&mut self, offset: usize, g: f64) {
        self.grads[offset] += g;
    }

    pub fn kind_of(&self, offset: usize) -> ParamKind {
        if offset < self.layout.alpha {
            ParamKind::Beta
        } else if offset < self.layout.alpha + self.layout.num_conns * self.layout.num_ops {
            ParamKind::Alpha
        } else {
            ParamKind::Weight
        }
    }

    fn conn_index(&self, c: Connection) -> usize {
        self.supernet
            .index_of(&c)
            .unwrap_or_else(|| panic!("{c} is not a supernet connection"))
    }

    fn op_index(&self, op: OperatorKind) -> usize {
        self.spec()
            .op_index(op)
            .unwrap_or_else(|| panic!("{op} is not in the operator set"))
    }

    pub fn beta_offset(&self, c: Connection) -> usize {
        self.layout.beta + self.conn_index(c)
    }

    pub fn alpha_offset(&self, c: Connection, op: OperatorKind) -> usize {
        self.layout.alpha + self.conn_index(c) * self.layout.num_ops + self.op_index(op)
    }

    pub fn omega_range(&self, c: Connection, op: OperatorKind) -> Range<usize> {
        self.layout.omega[self.conn_index(c) * self.layout.num_ops + self.op_index(op)].clone()
    }

    pub fn reduction_range(&self, stage: usize) -> Option<Range<usize>> {
        self.layout.reductions.get(stage).cloned().flatten()
    }

    pub fn head_ranges(&self) -> (Range<usize>, Range<usize>) {
        (self.layout.head_weight.clone(), self.layout.head_bias.clone())
    }

    pub fn beta(&self, c: Connection) -> f64 {
        self.values[self.beta_offset(c)]
    }

    pub fn alpha(&self, c: Connection, op: OperatorKind) -> f64 {
        self.values[self.alpha_offset(c, op)]
    }

    pub fn set_beta(&mut self, c: Connection, v: f64) {
        let i = self.beta_offset(c);
        self.values_mut()[i] = v;
    }

    pub fn set_alpha(&mut self, c: Connection, op: OperatorKind, v: f64) {
        let i = self.alpha_offset(c, op);
        self.values_mut()[i] = v;
    }

    pub fn edge_gate(&self, c: Connection) -> f64 {
        sigmoid(self.beta(c))
    }

    pub fn op_gate(&self, c: Connection, op: OperatorKind) -> f64 {
        sigmoid(self.alpha(c, op))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let spec = self.spec();
        let conns = self.supernet.connections();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: crate::space::FORMAT_VERSION,
            spec: spec.clone(),
            beta: conns
                .iter()
                .map(|&c| ((c.stage, c.source, c.target), self.beta(c)))
                .collect(),
            alpha: conns
                .iter()
                .flat_map(|&c| spec.operator_set.iter().map(move |&o| (c, o)))
                .map(|(c, o)| ((c.stage, c.source, c.target), o, self.alpha(c, o)))
                .collect(),
            omega: conns
                .iter()
                .flat_map(|&c| spec.operator_set.iter().map(move |&o| (c, o)))
                .map(|(c, o)| ((c.stage, c.source, c.target), o, self.values[self.omega_range(c, o)].to_vec()))
                .collect(),
            reductions: self
                .layout
                .reductions
                .iter()
                .map(|r| r.as_ref().map(|r| self.values[r.clone()].to_vec()))
                .collect(),
            head_weight: self.values[self.layout.head_weight.clone()].to_vec(),
            head_bias: self.values[self.layout.head_bias.clone()].to_vec(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse(format!("unexpected checkpoint format `{}`", ck.format)));
        }
        let supernet = build_supernet(&ck.spec)?;
        let mut store = ParamStore::new(&supernet, &InitConfig::default(), 0)?;
        let bad = |what: &str| Error::Parse(format!("checkpoint {what} does not match the supernet"));
        let conn = |(s, a, b): (usize, usize, usize)| -> Result<Connection> {
            let c = Connection::new(s, a, b);
            if supernet.contains(&c) {
                Ok(c)
            } else {
                Err(Error::Parse(format!("checkpoint names unknown connection {c}")))
            }
        };
        if ck.beta.len() != supernet.connections().len() {
            return Err(bad("beta block"));
        }
        for &(key, v) in &ck.beta {
            let i = store.beta_offset(conn(key)?);
            store.values[i] = v;
        }
        for &(key, op, v) in &ck.alpha {
            let c = conn(key)?;
            if ck.spec.op_index(op).is_none() {
                return Err(bad("alpha block"));
            }
            let i = store.alpha_offset(c, op);
            store.values[i] = v;
        }
        for (key, op, w) in &ck.omega {
            let c = conn(*key)?;
            if ck.spec.op_index(*op).is_none() {
                return Err(bad("omega block"));
            }
            let r = store.omega_range(c, *op);
            if r.len() != w.len() {
                return Err(bad("omega block"));
            }
            store.values[r].copy_from_slice(w);
        }
        if ck.reductions.len() != store.layout.reductions.len() {
            return Err(bad("reduction blocks"));
        }
        for (r, w) in store.layout.reductions.clone().iter().zip(&ck.reductions) {
            match (r, w) {
                (Some(r), Some(w)) if r.len() == w.len() => store.values[r.clone()].copy_from_slice(w),
                (None, None) => {}
                _ => return Err(bad("reduction blocks")),
            }
        }
        let (hw, hb) = store.head_ranges();
        if hw.len() != ck.head_weight.len() || hb.len() != ck.head_bias.len() {
            return Err(bad("head"));
        }
        store.values[hw].copy_from_slice(&ck.head_weight);
        store.values[hb].copy_from_slice(&ck.head_bias);
        store.generation = next_generation();
        Ok(store)
    }
}

pub const CHECKPOINT_FORMAT: &str = "ifnas-params";

/// Serialized parameters, each block keyed by `(stage, source, target)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: SupernetSpec,
    pub beta: Vec<((usize, usize, usize), f64)>,
    pub alpha: Vec<((usize, usize, usize), OperatorKind, f64)>,
    pub omega: Vec<((usize, usize, usize), OperatorKind, Vec<f64>)>,
    pub reductions: Vec<Option<Vec<f64>>>,
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
}

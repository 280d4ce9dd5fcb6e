//! The L-chain macro search space.
//!
//! Every stage is a chain of searched nodes `1..=N` fed by a stage input
//! (node 0). Node `j` may receive a connection from any of its `L` nearest
//! precursors, and every connection carries one candidate of each operator
//! kind. Stages are joined by fixed stride-2, channel-doubling reduction
//! units; no connection crosses a stage boundary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost;
use crate::error::{Error, Result};

/// Candidate operation carried by a connection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// ReLU, depthwise 3x3 (same padding), pointwise 1x1.
    #[serde(rename = "sep_conv_3x3")]
    SepConv3x3,
    Skip,
    /// ReLU followed by a dense affine map over the flattened feature map.
    /// Cheap stand-in for the convolution in fast test setups.
    ToyLinear,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 3] = [
        OperatorKind::SepConv3x3,
        OperatorKind::Skip,
        OperatorKind::ToyLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::SepConv3x3 => "sep_conv_3x3",
            OperatorKind::Skip => "skip",
            OperatorKind::ToyLinear => "toy_linear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    /// Searched nodes in the stage, not counting the stage input.
    pub node_count: usize,
    pub channels: usize,
    /// Side of the square feature map.
    pub spatial_size: usize,
    /// Whether a stride-2 reduction unit follows this stage.
    pub reduction_after: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupernetSpec {
    /// Maximum connection length `L`.
    #[serde(rename = "L")]
    pub max_len: usize,
    pub stages: Vec<StageSpec>,
    pub operator_set: Vec<OperatorKind>,
    pub num_classes: usize,
}

impl Default for SupernetSpec {
    /// Three searched stages of 18, 20 and 18 nodes with the two-operator set.
    fn default() -> Self {
        SupernetSpec {
            max_len: 4,
            stages: vec![
                StageSpec {
                    node_count: 18,
                    channels: 16,
                    spatial_size: 8,
                    reduction_after: true,
                },
                StageSpec {
                    node_count: 20,
                    channels: 32,
                    spatial_size: 4,
                    reduction_after: true,
                },
                StageSpec {
                    node_count: 18,
                    channels: 64,
                    spatial_size: 2,
                    reduction_after: false,
                },
            ],
            operator_set: vec![OperatorKind::SepConv3x3, OperatorKind::Skip],
            num_classes: 10,
        }
    }
}

impl SupernetSpec {
    /// Single-stage spec, handy for experiments on one chain.
    pub fn single_stage(
        max_len: usize,
        node_count: usize,
        channels: usize,
        spatial_size: usize,
        operator_set: Vec<OperatorKind>,
        num_classes: usize,
    ) -> Self {
        SupernetSpec {
            max_len,
            stages: vec![StageSpec {
                node_count,
                channels,
                spatial_size,
                reduction_after: false,
            }],
            operator_set,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::spec("L", "must be at least 1"));
        }
        if self.stages.is_empty() {
            return Err(Error::spec("stages", "at least one stage is required"));
        }
        if self.operator_set.is_empty() {
            return Err(Error::spec("operator_set", "must not be empty"));
        }
        let unique: BTreeSet<_> = self.operator_set.iter().collect();
        if unique.len() != self.operator_set.len() {
            return Err(Error::spec("operator_set", "contains duplicates"));
        }
        if self.num_classes < 2 {
            return Err(Error::spec("num_classes", "must be at least 2"));
        }
        for (s, st) in self.stages.iter().enumerate() {
            if st.node_count == 0 {
                return Err(Error::spec(format!("stages[{s}].node_count"), "must be at least 1"));
            }
            if st.channels == 0 {
                return Err(Error::spec(format!("stages[{s}].channels"), "must be at least 1"));
            }
            if st.spatial_size == 0 {
                return Err(Error::spec(format!("stages[{s}].spatial_size"), "must be at least 1"));
            }
            match self.stages.get(s + 1) {
                None if st.reduction_after => {
                    return Err(Error::spec(
                        format!("stages[{s}].reduction_after"),
                        "the last stage feeds the classifier and cannot reduce",
                    ));
                }
                None => {}
                Some(next) => {
                    let (c, hw) = self.transition_shape(s);
                    if next.channels != c {
                        return Err(Error::spec(
                            format!("stages[{}].channels", s + 1),
                            format!("expected {c} after the stage transition, found {}", next.channels),
                        ));
                    }
                    if next.spatial_size != hw {
                        return Err(Error::spec(
                            format!("stages[{}].spatial_size", s + 1),
                            format!("expected {hw} after the stage transition, found {}", next.spatial_size),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Output (channels, spatial) of the transition after stage `s`.
    pub fn transition_shape(&self, s: usize) -> (usize, usize) {
        let st = &self.stages[s];
        if st.reduction_after {
            (st.channels * 2, st.spatial_size.div_ceil(2))
        } else {
            (st.channels, st.spatial_size)
        }
    }

    pub fn op_index(&self, op: OperatorKind) -> Option<usize> {
        self.operator_set.iter().position(|&o| o == op)
    }

    /// Output node index of stage `s`.
    pub fn output_node(&self, s: usize) -> usize {
        self.stages[s].node_count
    }
}

/// A directed edge `(source, target)` inside one stage.
///
/// Ordered canonically by `(stage, target, source)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Connection {
    pub stage: usize,
    pub source: usize,
    pub target: usize,
}

impl Connection {
    pub const fn new(stage: usize, source: usize, target: usize) -> Self {
        Connection {
            stage,
            source,
            target,
        }
    }

    pub fn len(&self) -> usize {
        self.target - self.source
    }

    pub fn is_backbone(&self) -> bool {
        self.len() == 1
    }
}

impl Ord for Connection {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.stage, self.target, self.source).cmp(&(other.stage, other.target, other.source))
    }
}

impl PartialOrd for Connection {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Connection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}({},{})", self.stage, self.source, self.target)
    }
}

/// The full connection inventory of a spec.
#[derive(Clone, Debug)]
pub struct Supernet {
    spec: SupernetSpec,
    connections: Vec<Connection>,
    stage_ranges: Vec<Range<usize>>,
    index: BTreeMap<Connection, usize>,
}

pub fn build_supernet(spec: &SupernetSpec) -> Result<Supernet> {
    spec.validate()?;
    let mut connections = Vec::new();
    let mut stage_ranges = Vec::with_capacity(spec.stages.len());
    for (s, st) in spec.stages.iter().enumerate() {
        let start = connections.len();
        for target in 1..=st.node_count {
            for source in target.saturating_sub(spec.max_len)..target {
                connections.push(Connection::new(s, source, target));
            }
        }
        stage_ranges.push(start..connections.len());
    }
    let index = connections.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    Ok(Supernet {
        spec: spec.clone(),
        connections,
        stage_ranges,
        index,
    })
}

impl Supernet {
    pub fn spec(&self) -> &SupernetSpec {
        &self.spec
    }

    /// All connections in canonical order.
    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    pub fn stage_connections(&self, stage: usize) -> &[Connection] {
        &self.connections[self.stage_ranges[stage].clone()]
    }

    pub fn index_of(&self, c: &Connection) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn contains(&self, c: &Connection) -> bool {
        self.index.contains_key(c)
    }

    pub fn num_stages(&self) -> usize {
        self.stage_ranges.len()
    }

    /// Connections ending at `target` in `stage`, sources ascending.
    pub fn incoming(&self, stage: usize, target: usize) -> impl Iterator<Item = Connection> + '_ {
        let l = self.spec.max_len;
        (target.saturating_sub(l)..target).map(move |source| Connection::new(stage, source, target))
    }

    /// Every (connection, operator) pair, i.e. the architecture with nothing pruned.
    pub fn full_architecture(&self) -> DiscreteArchitecture {
        let alive = self
            .connections
            .iter()
            .flat_map(|&c| self.spec.operator_set.iter().map(move |&o| (c, o)))
            .collect();
        DiscreteArchitecture {
            spec: self.spec.clone(),
            alive,
        }
    }

    pub fn chain_architecture(&self, op: OperatorKind) -> DiscreteArchitecture {
        let alive = self
            .connections
            .iter()
            .filter(|c| c.is_backbone())
            .map(|&c| (c, op))
            .collect();
        DiscreteArchitecture {
            spec: self.spec.clone(),
            alive,
        }
    }
}

/// Edges and operators permanently removed from a supernet.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pruned {
    pub edges: BTreeSet<Connection>,
    pub ops: BTreeSet<(Connection, OperatorKind)>,
}

impl Pruned {
    pub fn op_alive(&self, c: Connection, op: OperatorKind) -> bool {
        !self.edges.contains(&c) && !self.ops.contains(&(c, op))
    }

    /// An edge is alive while it is not pruned and keeps at least one operator.
    pub fn edge_alive(&self, spec: &SupernetSpec, c: Connection) -> bool {
        !self.edges.contains(&c) && spec.operator_set.iter().any(|&o| !self.ops.contains(&(c, o)))
    }

    pub fn architecture(&self, supernet: &Supernet) -> DiscreteArchitecture {
        let spec = supernet.spec();
        let alive = supernet
            .connections()
            .iter()
            .flat_map(|&c| spec.operator_set.iter().map(move |&o| (c, o)))
            .filter(|&(c, o)| self.op_alive(c, o))
            .collect();
        DiscreteArchitecture {
            spec: spec.clone(),
            alive,
        }
    }

    /// Marks everything absent from `arch` as pruned.
    pub fn absorb(&mut self, supernet: &Supernet, arch: &DiscreteArchitecture) {
        let spec = supernet.spec();
        for &c in supernet.connections() {
            let ops: Vec<_> = spec.operator_set.iter().copied().filter(|&o| !arch.alive.contains(&(c, o))).collect();
            if ops.len() == spec.operator_set.len() {
                self.edges.insert(c);
            } else {
                self.ops.extend(ops.into_iter().map(|o| (c, o)));
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.ops.is_empty()
    }
}

/// A structural problem found by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnknownConnection { connection: Connection },
    UnknownOperator { connection: Connection, op: OperatorKind },
    NodeWithoutInput { stage: usize, node: usize },
    StageOutputDisconnected { stage: usize },
    TooManyInputs { stage: usize, node: usize, count: usize, limit: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownConnection { connection } => {
                write!(f, "connection {connection} is not part of the supernet")
            }
            Violation::UnknownOperator { connection, op } => {
                write!(f, "operator {op} on {connection} is not in the operator set")
            }
            Violation::NodeWithoutInput { stage, node } => {
                write!(f, "stage {stage} node {node} feeds other nodes but has no alive input")
            }
            Violation::StageOutputDisconnected { stage } => {
                write!(f, "stage {stage} output disconnected")
            }
            Violation::TooManyInputs {
                stage,
                node,
                count,
                limit,
            } => write!(f, "stage {stage} node {node} has {count} alive inputs (limit {limit})"),
        }
    }
}

/// The surviving (connection, operator) pairs of a searched network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscreteArchitecture {
    pub spec: SupernetSpec,
    pub alive: BTreeSet<(Connection, OperatorKind)>,
}

impl DiscreteArchitecture {
    pub fn new(spec: SupernetSpec, alive: impl IntoIterator<Item = (Connection, OperatorKind)>) -> Self {
        DiscreteArchitecture {
            spec,
            alive: alive.into_iter().collect(),
        }
    }

    /// Connections carrying at least one alive operator.
    pub fn edges(&self) -> BTreeSet<Connection> {
        self.alive.iter().map(|&(c, _)| c).collect()
    }

    pub fn stage_edges(&self, stage: usize) -> BTreeSet<Connection> {
        self.alive
            .iter()
            .filter(|(c, _)| c.stage == stage)
            .map(|&(c, _)| c)
            .collect()
    }

    pub fn ops_on(&self, c: Connection) -> impl Iterator<Item = OperatorKind> + '_ {
        self.alive
            .range((c, OperatorKind::SepConv3x3)..=(c, OperatorKind::ToyLinear))
            .map(|&(_, o)| o)
    }

    pub fn is_valid(&self) -> bool {
        validate(self).is_empty()
    }

    /// Deletes nodes that have no alive input, together with their outgoing
    /// pairs, until no such node remains. Returns the removed pairs.
    pub fn remove_dead_nodes(&mut self) -> Vec<(Connection, OperatorKind)> {
        let mut removed = Vec::new();
        for (s, st) in self.spec.stages.iter().enumerate() {
            let mut has_input = vec![false; st.node_count + 1];
            has_input[0] = true;
            for node in 1..=st.node_count {
                has_input[node] = self
                    .alive
                    .iter()
                    .any(|(c, _)| c.stage == s && c.target == node && has_input[c.source]);
            }
            let dead: Vec<_> = self
                .alive
                .iter()
                .filter(|(c, _)| c.stage == s && !has_input[c.source])
                .copied()
                .collect();
            for p in dead {
                self.alive.remove(&p);
                removed.push(p);
            }
        }
        removed
    }

    /// True when node 0 reaches the output of `stage` along alive edges.
    pub fn stage_connected(&self, stage: usize) -> bool {
        let n = match self.spec.stages.get(stage) {
            Some(st) => st.node_count,
            None => return false,
        };
        let mut reach = vec![false; n + 1];
        reach[0] = true;
        for c in self.stage_edges(stage) {
            if c.target <= n && c.source <= n && reach[c.source] {
                reach[c.target] = true;
            }
        }
        reach[n]
    }
}

/// Lists every violated structural invariant; empty means valid.
pub fn validate(arch: &DiscreteArchitecture) -> Vec<Violation> {
    let spec = &arch.spec;
    let mut out = Vec::new();
    for &(c, op) in &arch.alive {
        let in_space = c.stage < spec.stages.len()
            && c.source < c.target
            && c.target <= spec.stages[c.stage].node_count
            && c.len() <= spec.max_len;
        if !in_space {
            out.push(Violation::UnknownConnection { connection: c });
        } else if spec.op_index(op).is_none() {
            out.push(Violation::UnknownOperator { connection: c, op });
        }
    }
    if !out.is_empty() {
        out.dedup();
        return out;
    }
    let limit = spec.operator_set.len() * spec.max_len;
    for (s, st) in spec.stages.iter().enumerate() {
        let n = st.node_count;
        let mut in_pairs = vec![0usize; n + 1];
        let mut is_source = vec![false; n + 1];
        for (c, _) in arch.alive.iter().filter(|(c, _)| c.stage == s) {
            in_pairs[c.target] += 1;
            is_source[c.source] = true;
        }
        for node in 1..=n {
            if is_source[node] && in_pairs[node] == 0 {
                out.push(Violation::NodeWithoutInput { stage: s, node });
            }
            if in_pairs[node] > limit {
                out.push(Violation::TooManyInputs {
                    stage: s,
                    node,
                    count: in_pairs[node],
                    limit,
                });
            }
        }
        if in_pairs[n] == 0 || !arch.stage_connected(s) {
            out.push(Violation::StageOutputDisconnected { stage: s });
        }
    }
    out
}

/// Longest input-to-output path length (in edges), summed over stages.
pub fn depth(arch: &DiscreteArchitecture) -> Result<usize> {
    let violations = validate(arch);
    if !violations.is_empty() {
        return Err(Error::InvalidArchitecture(violations));
    }
    let mut total = 0;
    for (s, st) in arch.spec.stages.iter().enumerate() {
        // Canonical order visits edges by ascending target, a topological order.
        let mut longest: Vec<Option<usize>> = vec![None; st.node_count + 1];
        longest[0] = Some(0);
        for c in arch.stage_edges(s) {
            if let Some(d) = longest[c.source] {
                let cand = d + 1;
                if longest[c.target].is_none_or(|cur| cand > cur) {
                    longest[c.target] = Some(cand);
                }
            }
        }
        total += longest[st.node_count].expect("validated stage output is reachable");
    }
    Ok(total)
}

/// Options for [`random_architecture`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RandomConstraints {
    pub madds_budget: Option<u64>,
    /// Keep exactly one incoming connection (with one operator) per node.
    #[serde(default)]
    pub one_input_per_node: bool,
}

const RANDOM_BUDGET_ATTEMPTS: usize = 64;

/// Samples a valid architecture, the random-search baseline.
pub fn random_architecture(
    spec: &SupernetSpec,
    seed: u64,
    constraints: &RandomConstraints,
) -> Result<DiscreteArchitecture> {
    let supernet = build_supernet(spec)?;
    if let Some(budget) = constraints.madds_budget {
        let minimum = cost::minimal_valid_madds(spec)?;
        if budget < minimum {
            return Err(Error::InfeasibleBudget { budget, minimum });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_BUDGET_ATTEMPTS {
        let mut arch = if constraints.one_input_per_node {
            sample_one_input(&supernet, &mut rng)
        } else {
            sample_toggled(&supernet, &mut rng)
        };
        match constraints.madds_budget {
            None => return Ok(arch),
            Some(budget) => {
                if shrink_to_budget(&mut arch, budget, &mut rng)? {
                    return Ok(arch);
                }
            }
        }
    }
    Err(Error::Domain(format!(
        "no random architecture met the budget after {RANDOM_BUDGET_ATTEMPTS} attempts"
    )))
}

fn sample_toggled(supernet: &Supernet, rng: &mut ChaCha8Rng) -> DiscreteArchitecture {
    let spec = supernet.spec();
    let mut arch = DiscreteArchitecture::new(spec.clone(), []);
    for &c in supernet.connections() {
        for &op in &spec.operator_set {
            if rng.random_bool(0.5) {
                arch.alive.insert((c, op));
            }
        }
    }
    arch.remove_dead_nodes();
    repair_outputs(&mut arch, rng);
    arch
}

/// Reconnects each disconnected stage output with a backbone run starting
/// from the highest node that still has an input.
fn repair_outputs(arch: &mut DiscreteArchitecture, rng: &mut ChaCha8Rng) {
    let spec = arch.spec.clone();
    for s in 0..spec.stages.len() {
        if arch.stage_connected(s) {
            continue;
        }
        let n = spec.output_node(s);
        let edges = arch.stage_edges(s);
        let highest = (0..n)
            .rev()
            .find(|&k| k == 0 || edges.iter().any(|c| c.target == k))
            .unwrap_or(0);
        for k in highest..n {
            let op = *spec.operator_set.choose(rng).expect("non-empty operator set");
            arch.alive.insert((Connection::new(s, k, k + 1), op));
        }
    }
}

fn sample_one_input(supernet: &Supernet, rng: &mut ChaCha8Rng) -> DiscreteArchitecture {
    let spec = supernet.spec();
    let mut arch = DiscreteArchitecture::new(spec.clone(), []);
    for (s, st) in spec.stages.iter().enumerate() {
        for node in 1..=st.node_count {
            let inputs: Vec<_> = supernet.incoming(s, node).collect();
            let c = *inputs.choose(rng).expect("every node has a precursor");
            let op = *spec.operator_set.choose(rng).expect("non-empty operator set");
            arch.alive.insert((c, op));
        }
    }
    arch
}

/// Removes uniformly random pairs, never breaking validity, until the
/// budget is met. Returns false if it gets stuck above the budget.
fn shrink_to_budget(arch: &mut DiscreteArchitecture, budget: u64, rng: &mut ChaCha8Rng) -> Result<bool> {
    loop {
        if cost::madds(arch)? <= budget {
            return Ok(true);
        }
        let mut candidates: Vec<_> = arch
            .alive
            .iter()
            .copied()
            .filter(|&(_, op)| cost::op_is_costly(op))
            .collect();
        let mut removed = false;
        while !candidates.is_empty() {
            let i = rng.random_range(0..candidates.len());
            let pair = candidates.swap_remove(i);
            let mut trial = arch.clone();
            trial.alive.remove(&pair);
            trial.remove_dead_nodes();
            if trial.is_valid() {
                *arch = trial;
                removed = true;
                break;
            }
        }
        if !removed {
            return Ok(false);
        }
    }
}

pub const ARCH_FORMAT: &str = "ifnas-architecture";
pub const FORMAT_VERSION: u32 = 1;
/// Recorded in every file: node 0 is the stage input, searched nodes are `1..=N`.
pub const NODE_INDEXING: &str = "stage-input-is-node-0";

#[derive(Serialize, Deserialize)]
struct ArchFile {
    format: String,
    version: u32,
    node_indexing: String,
    spec: SupernetSpec,
    alive: Vec<(usize, usize, usize, String)>,
}

pub fn export_json(arch: &DiscreteArchitecture) -> String {
    let file = ArchFile {
        format: ARCH_FORMAT.into(),
        version: FORMAT_VERSION,
        node_indexing: NODE_INDEXING.into(),
        spec: arch.spec.clone(),
        alive: arch
            .alive
            .iter()
            .map(|(c, o)| (c.stage, c.source, c.target, o.name().to_string()))
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("architecture serializes");
    s.push('\n');
    s
}

pub fn import_json(text: &str) -> Result<DiscreteArchitecture> {
    let file: ArchFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format != ARCH_FORMAT {
        return Err(Error::Parse(format!("unexpected format tag `{}`", file.format)));
    }
    if file.version != FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported version {}", file.version)));
    }
    if file.node_indexing != NODE_INDEXING {
        return Err(Error::Parse(format!("unsupported node indexing `{}`", file.node_indexing)));
    }
    file.spec
        .validate()
        .map_err(|e| Error::Parse(format!("spec: {e}")))?;
    let spec = file.spec;
    let mut alive = BTreeSet::new();
    for (i, (stage, source, target, op)) in file.alive.into_iter().enumerate() {
        let at = |msg: String| Error::Parse(format!("alive[{i}]: {msg}"));
        let st = spec
            .stages
            .get(stage)
            .ok_or_else(|| at(format!("stage {stage} out of range")))?;
        if target == 0 || target > st.node_count {
            return Err(at(format!(
                "target {target} out of range for stage {stage} (nodes 1..={})",
                st.node_count
            )));
        }
        if source >= target || target - source > spec.max_len {
            return Err(at(format!(
                "connection ({source},{target}) violates 1 <= target - source <= {}",
                spec.max_len
            )));
        }
        let op = OperatorKind::from_name(&op).ok_or_else(|| at(format!("unknown operator `{op}`")))?;
        if spec.op_index(op).is_none() {
            return Err(at(format!("operator `{op}` not in the operator set")));
        }
        if !alive.insert((Connection::new(stage, source, target), op)) {
            return Err(at("duplicate entry".into()));
        }
    }
    Ok(DiscreteArchitecture { spec, alive })
}

/// Graphviz rendering, one edge per alive pair in canonical (topological) order.
pub fn export_dot(arch: &DiscreteArchitecture) -> String {
    let edges: Vec<(Connection, String)> = arch
        .alive
        .iter()
        .map(|&(c, o)| (c, o.name().to_string()))
        .collect();
    render_dot("architecture", &arch.spec, &edges)
}

/// Graphviz rendering of every supernet connection.
pub fn export_supernet_dot(supernet: &Supernet) -> String {
    let edges: Vec<(Connection, String)> = supernet
        .connections()
        .iter()
        .map(|&c| (c, format!("pre-{}", c.len())))
        .collect();
    render_dot("supernet", supernet.spec(), &edges)
}

fn render_dot(name: &str, spec: &SupernetSpec, edges: &[(Connection, String)]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "digraph {name} {{");
    let _ = writeln!(out, "  rankdir=LR;");
    for (s, st) in spec.stages.iter().enumerate() {
        let _ = writeln!(out, "  subgraph cluster_s{s} {{");
        let _ = writeln!(
            out,
            "    label=\"stage {s} ({}ch, {}x{})\";",
            st.channels, st.spatial_size, st.spatial_size
        );
        for node in 0..=st.node_count {
            let _ = writeln!(out, "    s{s}_n{node} [label=\"{node}\"];");
        }
        for (c, label) in edges.iter().filter(|(c, _)| c.stage == s) {
            let _ = writeln!(
                out,
                "    s{s}_n{} -> s{s}_n{} [label=\"{label}\"];",
                c.source, c.target
            );
        }
        let _ = writeln!(out, "  }}");
    }
    let _ = writeln!(out, "}}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(l: usize, n: usize) -> SupernetSpec {
        SupernetSpec::single_stage(l, n, 4, 4, vec![OperatorKind::SepConv3x3, OperatorKind::Skip], 2)
    }

    #[test]
    fn small_supernets_enumerate_exactly() {
        let s = build_supernet(&toy(4, 2)).unwrap();
        assert_eq!(
            s.connections(),
            &[Connection::new(0, 0, 1), Connection::new(0, 0, 2), Connection::new(0, 1, 2)]
        );
        let s = build_supernet(&toy(1, 3)).unwrap();
        assert_eq!(
            s.connections(),
            &[Connection::new(0, 0, 1), Connection::new(0, 1, 2), Connection::new(0, 2, 3)]
        );
    }

    #[test]
    fn eighteen_node_stage_matches_enumeration() {
        let s = build_supernet(&toy(4, 18)).unwrap();
        let brute = (0..=18usize)
            .flat_map(|j| (0..j).map(move |i| (i, j)))
            .filter(|(i, j)| j - i <= 4)
            .count();
        assert_eq!(brute, 66);
        assert_eq!(s.connections().len(), brute);
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let mut spec = toy(4, 6);
        spec.max_len = 0;
        assert!(matches!(build_supernet(&spec), Err(Error::InvalidSpec { field, .. }) if field == "L"));
        let mut spec = toy(4, 6);
        spec.operator_set = vec![OperatorKind::Skip, OperatorKind::Skip];
        assert!(matches!(build_supernet(&spec), Err(Error::InvalidSpec { field, .. }) if field == "operator_set"));
        let mut spec = SupernetSpec::default();
        spec.stages[1].channels = 31;
        assert!(
            matches!(build_supernet(&spec), Err(Error::InvalidSpec { field, .. }) if field == "stages[1].channels")
        );
    }

    #[test]
    fn chain_is_valid() {
        let s = build_supernet(&SupernetSpec::default()).unwrap();
        let chain = s.chain_architecture(OperatorKind::SepConv3x3);
        assert!(validate(&chain).is_empty());
        assert_eq!(depth(&chain).unwrap(), 56);
    }

    #[test]
    fn node_without_input_is_reported() {
        let spec = toy(4, 8);
        let mut arch = build_supernet(&spec).unwrap().chain_architecture(OperatorKind::Skip);
        arch.alive.remove(&(Connection::new(0, 4, 5), OperatorKind::Skip));
        arch.alive.insert((Connection::new(0, 3, 6), OperatorKind::Skip));
        assert_eq!(validate(&arch), vec![Violation::NodeWithoutInput { stage: 0, node: 5 }]);
    }

    #[test]
    fn disconnected_output_is_reported() {
        let spec = toy(4, 6);
        let mut arch = build_supernet(&spec).unwrap().chain_architecture(OperatorKind::Skip);
        arch.alive.remove(&(Connection::new(0, 5, 6), OperatorKind::Skip));
        let v = validate(&arch);
        assert!(v.contains(&Violation::StageOutputDisconnected { stage: 0 }));
        assert_eq!(v.last().unwrap().to_string(), "stage 0 output disconnected");
    }

    #[test]
    fn depth_of_single_long_edge() {
        let spec = toy(4, 2);
        let arch = DiscreteArchitecture::new(spec, [(Connection::new(0, 0, 2), OperatorKind::Skip)]);
        assert_eq!(depth(&arch).unwrap(), 1);
    }

    #[test]
    fn depth_rejects_invalid() {
        let spec = toy(4, 3);
        let arch = DiscreteArchitecture::new(spec, [(Connection::new(0, 0, 1), OperatorKind::Skip)]);
        assert!(matches!(depth(&arch), Err(Error::InvalidArchitecture(_))));
    }

    #[test]
    fn dead_node_cleanup_cascades() {
        let spec = toy(4, 4);
        let mut arch = DiscreteArchitecture::new(
            spec,
            [
                (Connection::new(0, 1, 2), OperatorKind::Skip),
                (Connection::new(0, 2, 3), OperatorKind::Skip),
                (Connection::new(0, 0, 4), OperatorKind::Skip),
            ],
        );
        let removed = arch.remove_dead_nodes();
        assert_eq!(removed.len(), 2);
        assert_eq!(arch.alive.len(), 1);
        assert!(arch.is_valid());
    }

    #[test]
    fn random_is_deterministic() {
        let spec = toy(4, 6);
        let c = RandomConstraints::default();
        let a = random_architecture(&spec, 7, &c).unwrap();
        let b = random_architecture(&spec, 7, &c).unwrap();
        assert_eq!(a, b);
        assert!(a.is_valid());
    }

    #[test]
    fn one_input_per_node() {
        let spec = SupernetSpec::default();
        let c = RandomConstraints {
            one_input_per_node: true,
            ..Default::default()
        };
        for seed in 0..20 {
            let a = random_architecture(&spec, seed, &c).unwrap();
            assert!(a.is_valid());
            for (s, st) in spec.stages.iter().enumerate() {
                for node in 1..=st.node_count {
                    let n_in = a.alive.iter().filter(|(c, _)| c.stage == s && c.target == node).count();
                    assert_eq!(n_in, 1);
                }
            }
        }
    }

    #[test]
    fn budget_below_minimum_is_infeasible() {
        let spec = SupernetSpec::default();
        let c = RandomConstraints {
            madds_budget: Some(1),
            ..Default::default()
        };
        assert!(matches!(
            random_architecture(&spec, 0, &c),
            Err(Error::InfeasibleBudget { .. })
        ));
    }

    #[test]
    fn budgeted_random_meets_budget() {
        let spec = SupernetSpec::default();
        let full = cost::madds(&build_supernet(&spec).unwrap().full_architecture()).unwrap();
        let budget = full / 4;
        let c = RandomConstraints {
            madds_budget: Some(budget),
            ..Default::default()
        };
        for seed in 0..5 {
            let a = random_architecture(&spec, seed, &c).unwrap();
            assert!(a.is_valid());
            assert!(cost::madds(&a).unwrap() <= budget);
        }
    }

    #[test]
    fn json_round_trip_and_errors() {
        let spec = toy(4, 6);
        let a = random_architecture(&spec, 3, &RandomConstraints::default()).unwrap();
        let text = export_json(&a);
        assert_eq!(import_json(&text).unwrap(), a);

        let bad = text.replacen("\"L\": 4", "\"L\": 4,,", 1);
        let err = import_json(&bad).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");

        let json = r#"{"format":"ifnas-architecture","version":1,"node_indexing":"stage-input-is-node-0",
            "spec":{"L":2,"stages":[{"node_count":3,"channels":2,"spatial_size":2,"reduction_after":false}],
            "operator_set":["skip"],"num_classes":2},
            "alive":[[0,0,1,"skip"],[0,2,9,"skip"]]}"#;
        let err = import_json(json).unwrap_err().to_string();
        assert!(err.contains("alive[1]") && err.contains("target 9"), "{err}");
    }

    #[test]
    fn dot_has_one_edge_per_backbone_connection() {
        let spec = SupernetSpec::default();
        let chain = build_supernet(&spec).unwrap().chain_architecture(OperatorKind::SepConv3x3);
        let dot = export_dot(&chain);
        for (s, st) in spec.stages.iter().enumerate() {
            let prefix = format!("    s{s}_n");
            let n_edges = dot.lines().filter(|l| l.starts_with(&prefix) && l.contains("->")).count();
            assert_eq!(n_edges, st.node_count);
        }
    }
}

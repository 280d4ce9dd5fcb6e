//! Interleaved connections and interleaving-free sampling.
//!
//! Two non-backbone connections `(a, b)` and `(a', b')` of one stage
//! interleave when their open intervals `(a, b)` and `(a', b')` intersect,
//! i.e. some half-integer position `d + 1/2` lies strictly inside both.
//! Connections sharing a target node are exempt: they are the competing
//! candidates of a single node.
//!
//! Grouping targets by `((t - 1) mod L) + 1` yields `L` sub-supernets that
//! contain no interleaved pair: two distinct targets of one group are at
//! least `L` apart and no connection is longer than `L`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Connection, Supernet, SupernetSpec};

/// Which same-target pairs are exempt from the interleave predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exemption {
    /// Every pair sharing a target node is exempt.
    #[default]
    SameTarget,
    /// No exemption: overlapping same-target pairs count as interleaved.
    Strict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InterleavePair {
    pub first: Connection,
    pub second: Connection,
}

impl InterleavePair {
    fn new(a: Connection, b: Connection) -> Self {
        if a <= b {
            InterleavePair { first: a, second: b }
        } else {
            InterleavePair { first: b, second: a }
        }
    }
}

impl fmt::Display for InterleavePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} x {}", self.first, self.second)
    }
}

pub fn interleaves(c1: Connection, c2: Connection) -> Result<bool> {
    interleaves_with(c1, c2, Exemption::SameTarget)
}

pub fn interleaves_with(c1: Connection, c2: Connection, exemption: Exemption) -> Result<bool> {
    if c1.stage != c2.stage {
        return Err(Error::Domain(format!("{c1} and {c2} lie in different stages")));
    }
    if c1.is_backbone() || c2.is_backbone() || c1 == c2 {
        return Ok(false);
    }
    if exemption == Exemption::SameTarget && c1.target == c2.target {
        return Ok(false);
    }
    Ok(c1.source.max(c2.source) < c1.target.min(c2.target))
}

/// All interleaved pairs among `conns` (any mix of stages), sorted.
pub fn find_interleaved_pairs(conns: &BTreeSet<Connection>) -> Vec<InterleavePair> {
    find_interleaved_pairs_with(conns, Exemption::SameTarget)
}

/// Sweep over sources with an active set ordered by target; runs in
/// `O(M log M + K)` for `K` overlapping pairs.
pub fn find_interleaved_pairs_with(conns: &BTreeSet<Connection>, exemption: Exemption) -> Vec<InterleavePair> {
    let mut by_start: Vec<Connection> = conns.iter().copied().filter(|c| !c.is_backbone()).collect();
    by_start.sort_by_key(|c| (c.stage, c.source, c.target));

    let mut out = Vec::new();
    let mut active: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut stage = None;
    for c in by_start {
        if stage != Some(c.stage) {
            active.clear();
            stage = Some(c.stage);
        }
        while let Some(&(t, _)) = active.first() {
            if t > c.source {
                break;
            }
            active.pop_first();
        }
        for &(t, s) in &active {
            if exemption == Exemption::SameTarget && t == c.target {
                continue;
            }
            out.push(InterleavePair::new(Connection::new(c.stage, s, t), c));
        }
        active.insert((c.target, c.source));
    }
    out.sort();
    out
}

/// Interleaved pairs under both exemption readings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub same_target_exempt: Vec<InterleavePair>,
    pub strict: Vec<InterleavePair>,
}

pub fn audit(conns: &BTreeSet<Connection>) -> AuditReport {
    AuditReport {
        same_target_exempt: find_interleaved_pairs_with(conns, Exemption::SameTarget),
        strict: find_interleaved_pairs_with(conns, Exemption::Strict),
    }
}

/// Group label `λ ∈ 1..=L` of a non-backbone connection, from its target.
pub fn group_of(c: Connection, max_len: usize) -> Result<usize> {
    if max_len == 0 {
        return Err(Error::Domain("L must be at least 1".into()));
    }
    if c.is_backbone() {
        return Err(Error::Domain(format!(
            "{c} is a backbone connection and belongs to every group"
        )));
    }
    Ok((c.target - 1) % max_len + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskLabel {
    /// Whole supernet active, architecture parameters frozen.
    WarmUp,
    Group(usize),
}

impl fmt::Display for MaskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskLabel::WarmUp => f.write_str("warmup"),
            MaskLabel::Group(l) => write!(f, "G{l}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMask {
    pub active: BTreeSet<Connection>,
    pub label: MaskLabel,
}

impl SampleMask {
    pub fn contains(&self, c: &Connection) -> bool {
        self.active.contains(c)
    }
}

pub fn warmup_mask(supernet: &Supernet) -> SampleMask {
    SampleMask {
        active: supernet.connections().iter().copied().collect(),
        label: MaskLabel::WarmUp,
    }
}

/// The backbone plus every connection whose target lies in group `λ`.
pub fn extract_subsupernet(supernet: &Supernet, lambda: usize) -> Result<SampleMask> {
    let l = supernet.spec().max_len;
    if lambda == 0 || lambda > l {
        return Err(Error::Domain(format!("group {lambda} outside 1..={l}")));
    }
    let active = supernet
        .connections()
        .iter()
        .copied()
        .filter(|&c| c.is_backbone() || (c.target - 1) % l + 1 == lambda)
        .collect();
    Ok(SampleMask {
        active,
        label: MaskLabel::Group(lambda),
    })
}

pub fn is_interleaving_free(mask: &SampleMask) -> bool {
    find_interleaved_pairs(&mask.active).is_empty()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub label: MaskLabel,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub phases: Vec<Phase>,
    pub loop_length: usize,
}

impl Schedule {
    pub fn total_iterations(&self) -> usize {
        self.phases.iter().map(|p| p.iterations).sum()
    }
}

/// `loops` repetitions of `[WarmUp, G1, ..., GL]`.
pub fn make_schedule(max_len: usize, iterations_per_step: usize, loops: usize) -> Result<Schedule> {
    if max_len == 0 || iterations_per_step == 0 || loops == 0 {
        return Err(Error::Domain(
            "L, iterations per step and loop count must all be positive".into(),
        ));
    }
    let one_loop = std::iter::once(MaskLabel::WarmUp).chain((1..=max_len).map(MaskLabel::Group));
    let phases = std::iter::repeat_n(one_loop, loops)
        .flatten()
        .map(|label| Phase {
            label,
            iterations: iterations_per_step,
        })
        .collect();
    Ok(Schedule {
        phases,
        loop_length: max_len + 1,
    })
}

/// Result of [`inject_interleaves`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Injection {
    pub mask: SampleMask,
    pub injected: Vec<Connection>,
}

/// Adds `k` connections that each interleave with at least one of the
/// `candidates` (the competing inputs of one node).
///
/// For a tracked node `t` the preferred order is `(t-5, t-1)`, `(t-7, t-4)`,
/// `(t-6, t-2)`; for `t = 8` this is `(3,7)`, `(1,4)`, `(2,6)`. Any remaining
/// feasible connections follow in canonical order.
pub fn inject_interleaves(
    supernet: &Supernet,
    mask: &SampleMask,
    k: usize,
    candidates: &[Connection],
) -> Result<Injection> {
    if k == 0 {
        return Ok(Injection {
            mask: mask.clone(),
            injected: Vec::new(),
        });
    }
    let first = *candidates
        .first()
        .ok_or_else(|| Error::InfeasibleInjection("no candidate connections given".into()))?;
    if candidates
        .iter()
        .any(|c| c.stage != first.stage || c.target != first.target)
    {
        return Err(Error::InfeasibleInjection(
            "candidates must share one stage and one target node".into(),
        ));
    }
    let (stage, t) = (first.stage, first.target);

    let feasible = |c: &Connection| -> bool {
        supernet.contains(c)
            && !c.is_backbone()
            && c.target != t
            && !mask.contains(c)
            && candidates
                .iter()
                .any(|&cand| interleaves(*c, cand).unwrap_or(false))
    };

    let preferred = [(5, 1), (7, 4), (6, 2)]
        .into_iter()
        .filter(|&(a, _)| t >= a)
        .map(|(a, b)| Connection::new(stage, t - a, t - b));
    let fallback = supernet.stage_connections(stage).iter().copied();

    let mut injected: Vec<Connection> = Vec::new();
    for c in preferred.chain(fallback) {
        if injected.len() == k {
            break;
        }
        if feasible(&c) && !injected.contains(&c) {
            injected.push(c);
        }
    }
    if injected.len() < k {
        return Err(Error::InfeasibleInjection(format!(
            "only {} interfering connections exist for target {t} in stage {stage}, {k} requested",
            injected.len()
        )));
    }
    let mut out = mask.clone();
    out.active.extend(injected.iter().copied());
    Ok(Injection {
        mask: out,
        injected,
    })
}

pub const MASK_FORMAT: &str = "ifnas-mask";

#[derive(Serialize, Deserialize)]
struct MaskFile {
    format: String,
    version: u32,
    spec: SupernetSpec,
    label: MaskLabel,
    active: Vec<(usize, usize, usize)>,
}

pub fn export_mask_json(spec: &SupernetSpec, mask: &SampleMask) -> String {
    let file = MaskFile {
        format: MASK_FORMAT.into(),
        version: crate::space::FORMAT_VERSION,
        spec: spec.clone(),
        label: mask.label,
        active: mask.active.iter().map(|c| (c.stage, c.source, c.target)).collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("mask serializes");
    s.push('\n');
    s
}

pub fn import_mask_json(text: &str) -> Result<(SupernetSpec, SampleMask)> {
    let file: MaskFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format != MASK_FORMAT {
        return Err(Error::Parse(format!("unexpected format tag `{}`", file.format)));
    }
    let supernet = crate::space::build_supernet(&file.spec).map_err(|e| Error::Parse(format!("spec: {e}")))?;
    let mut active = BTreeSet::new();
    for (i, (stage, source, target)) in file.active.into_iter().enumerate() {
        let c = Connection::new(stage, source, target);
        if source >= target || !supernet.contains(&c) {
            return Err(Error::Parse(format!("active[{i}]: {c} is not a supernet connection")));
        }
        active.insert(c);
    }
    Ok((
        file.spec,
        SampleMask {
            active,
            label: file.label,
        },
    ))
}

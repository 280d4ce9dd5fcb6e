use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::SearchState;
use crate::cost::{madds, op_madds};
use crate::error::Result;
use crate::space::{Connection, OperatorKind, Pruned};

/// What a prune event removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneCause {
    /// Gate fell below the threshold.
    Threshold,
    /// Weakest remaining gate removed to meet the budget after the loop limit.
    Forced,
    /// Lost its source node to another removal.
    Cleanup,
    /// Dropped by the one-input-per-node derivation.
    Derivation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub iteration: u64,
    pub loop_index: usize,
    pub connection: Connection,
    /// `None` for a whole edge.
    pub op: Option<OperatorKind>,
    pub gate: f64,
    pub cause: PruneCause,
    pub madds_after: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PruneOutcome {
    pub events: Vec<PruneEvent>,
    /// Candidates below the threshold left in place to keep a stage output reachable.
    pub protected: Vec<Connection>,
    /// Nothing was prunable: the discretization weight should grow.
    pub raise_mu: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Target {
    Edge(Connection),
    Op(Connection, OperatorKind),
}

impl Target {
    fn connection(self) -> Connection {
        match self {
            Target::Edge(c) | Target::Op(c, _) => c,
        }
    }
}

fn candidates(state: &SearchState) -> Vec<(f64, Target)> {
    let store = &state.params;
    let spec = store.spec();
    let mut out = Vec::new();
    for &c in store.supernet().connections() {
        if !state.pruned.edge_alive(spec, c) {
            continue;
        }
        out.push((store.edge_gate(c), Target::Edge(c)));
        for &o in &spec.operator_set {
            if state.pruned.op_alive(c, o) {
                out.push((store.op_gate(c, o), Target::Op(c, o)));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out
}

/// Applies one removal plus dead-node cleanup, or returns `None` when the
/// result would leave some stage output unreachable.
fn try_remove(state: &SearchState, target: Target) -> Option<(Pruned, Vec<(Connection, OperatorKind)>)> {
    let supernet = state.params.supernet();
    let mut next = state.pruned.clone();
    match target {
        Target::Edge(c) => {
            next.edges.insert(c);
        }
        Target::Op(c, o) => {
            next.ops.insert((c, o));
        }
    }
    let mut arch = next.architecture(supernet);
    let cleaned = arch.remove_dead_nodes();
    if !(0..supernet.num_stages()).all(|s| arch.stage_connected(s)) {
        return None;
    }
    next.absorb(supernet, &arch);
    Some((next, cleaned))
}

fn commit(state: &mut SearchState, target: Target, gate: f64, cause: PruneCause) -> Result<Option<PruneEvent>> {
    let Some((next, cleaned)) = try_remove(state, target) else {
        return Ok(None);
    };
    state.pruned = next;
    let madds_after = madds(&state.pruned.architecture(state.params.supernet()))?;
    let (connection, op) = match target {
        Target::Edge(c) => (c, None),
        Target::Op(c, o) => (c, Some(o)),
    };
    let event = PruneEvent {
        iteration: state.iteration,
        loop_index: state.loop_index,
        connection,
        op,
        gate,
        cause,
        madds_after,
    };
    state.timeline.push(event.clone());
    for (c, o) in cleaned {
        state.timeline.push(PruneEvent {
            iteration: state.iteration,
            loop_index: state.loop_index,
            connection: c,
            op: Some(o),
            gate: state.params.op_gate(c, o),
            cause: PruneCause::Cleanup,
            madds_after,
        });
    }
    Ok(Some(event))
}

/// Permanently removes every alive edge and operator whose gate is below
/// `threshold`, weakest first, skipping removals that would disconnect a
/// stage output.
pub fn prune_step(state: &mut SearchState, threshold: f64) -> Result<PruneOutcome> {
    let mut outcome = PruneOutcome::default();
    for (gate, target) in candidates(state) {
        if gate >= threshold {
            break;
        }
        // An earlier removal may already have taken this one out.
        let still_alive = match target {
            Target::Edge(c) => state.pruned.edge_alive(state.params.spec(), c),
            Target::Op(c, o) => state.pruned.op_alive(c, o),
        };
        if !still_alive {
            continue;
        }
        match commit(state, target, gate, PruneCause::Threshold)? {
            Some(e) => outcome.events.push(e),
            None => outcome.protected.push(target.connection()),
        }
    }
    outcome.raise_mu = outcome.events.is_empty();
    Ok(outcome)
}

/// Per stage, the alive input-to-output path of least MAdds (ties go to the
/// path with the larger product of gates), as `(connection, operator)` pairs.
pub fn cheapest_core(state: &SearchState) -> BTreeSet<(Connection, OperatorKind)> {
    let store = &state.params;
    let supernet = store.supernet();
    let spec = supernet.spec();
    let mut core = BTreeSet::new();
    for (s, st) in spec.stages.iter().enumerate() {
        let n = st.node_count;
        // (madds, -ln gate product, predecessor pair)
        let mut best: Vec<Option<(u64, f64, Option<(Connection, OperatorKind)>)>> = vec![None; n + 1];
        best[0] = Some((0, 0.0, None));
        for j in 1..=n {
            for c in supernet.incoming(s, j) {
                let Some((cost, weak, _)) = best[c.source] else { continue };
                for &o in &spec.operator_set {
                    if !state.pruned.op_alive(c, o) {
                        continue;
                    }
                    let cand = (
                        cost + op_madds(o, st.channels, st.spatial_size),
                        weak - (store.edge_gate(c) * store.op_gate(c, o)).max(f64::MIN_POSITIVE).ln(),
                    );
                    let better = match best[j] {
                        None => true,
                        Some((bc, bw, _)) => cand.0 < bc || (cand.0 == bc && cand.1 < bw),
                    };
                    if better {
                        best[j] = Some((cand.0, cand.1, Some((c, o))));
                    }
                }
            }
        }
        let mut node = n;
        while let Some(Some((_, _, Some((c, o))))) = best.get(node) {
            core.insert((*c, *o));
            node = c.source;
        }
    }
    core
}

/// Removes the single weakest edge or operator regardless of threshold,
/// never touching the [`cheapest_core`]. Returns `None` once nothing outside
/// the core can go.
pub fn prune_weakest(state: &mut SearchState) -> Result<Option<PruneEvent>> {
    let core = cheapest_core(state);
    for (gate, target) in candidates(state) {
        let touches_core = match target {
            Target::Edge(c) => core.iter().any(|&(k, _)| k == c),
            Target::Op(c, o) => core.contains(&(c, o)),
        };
        if touches_core {
            continue;
        }
        if let Some(e) = commit(state, target, gate, PruneCause::Forced)? {
            return Ok(Some(e));
        }
    }
    Ok(None)
}

/// Keeps only the strongest alive input edge of every node (ties go to the
/// canonically smaller connection), then cleans up dead nodes.
pub fn keep_one_input(state: &mut SearchState) -> Result<Vec<PruneEvent>> {
    let supernet = state.params.supernet().clone();
    let spec = supernet.spec();
    let mut events = Vec::new();
    for (s, st) in spec.stages.iter().enumerate() {
        for j in 1..=st.node_count {
            let alive: Vec<Connection> = supernet
                .incoming(s, j)
                .filter(|&c| state.pruned.edge_alive(spec, c))
                .collect();
            let Some(&best) = alive.iter().min_by(|a, b| {
                state.params.edge_gate(**b).total_cmp(&state.params.edge_gate(**a)).then(a.cmp(b))
            }) else {
                continue;
            };
            for c in alive.into_iter().filter(|&c| c != best) {
                state.pruned.edges.insert(c);
                events.push((c, state.params.edge_gate(c)));
            }
        }
    }
    let mut arch = state.pruned.architecture(&supernet);
    let cleaned = arch.remove_dead_nodes();
    state.pruned.absorb(&supernet, &arch);
    let madds_after = madds(&arch)?;
    let mut out: Vec<PruneEvent> = events
        .into_iter()
        .map(|(c, gate)| PruneEvent {
            iteration: state.iteration,
            loop_index: state.loop_index,
            connection: c,
            op: None,
            gate,
            cause: PruneCause::Derivation,
            madds_after,
        })
        .collect();
    out.extend(cleaned.into_iter().map(|(c, o)| PruneEvent {
        iteration: state.iteration,
        loop_index: state.loop_index,
        connection: c,
        op: Some(o),
        gate: state.params.op_gate(c, o),
        cause: PruneCause::Cleanup,
        madds_after,
    }));
    state.timeline.extend(out.iter().cloned());
    Ok(out)
}

//! The search loop: a weights-only warm-up, then repeated loops of
//! `[WarmUp, G1, ..., GL]` steps on interleaving-free sub-supernets (or on
//! the whole supernet in the baseline mode), with a growing polarizing
//! regularizer and permanent pruning of gates below a threshold until the
//! MAdds budget is met.

mod config;
mod prune;
mod regularizer;

use serde::{Deserialize, Serialize};

pub use crate::cost::madds;
pub use config::{Derivation, SearchConfig, TOY_BUDGET};
pub use prune::{cheapest_core, keep_one_input, prune_step, prune_weakest, PruneCause, PruneEvent, PruneOutcome};
pub(crate) use regularizer::polarization;
pub use regularizer::{regularizer, RegularizerValue, RegularizerWeights};

use crate::autodiff::{forward_mixed, Checkpoint, ParamKind, ParamStore};
use crate::data::{Dataset, Sampler};
use crate::error::{Error, Result};
use crate::interleave::{extract_subsupernet, find_interleaved_pairs, warmup_mask, MaskLabel, SampleMask};
use crate::space::{build_supernet, depth, validate, Connection, DiscreteArchitecture, Pruned};

pub const MIXING_FORMULA: &str = "x_j = sum_(i,j) g(beta_ij) * sum_o g(alpha_ij^o) * o(x_i)";

/// Which parameter groups a phase may move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateFlags {
    pub weights: bool,
    pub beta: bool,
    pub alpha: bool,
}

impl UpdateFlags {
    pub const WARM_UP: UpdateFlags = UpdateFlags {
        weights: true,
        beta: false,
        alpha: false,
    };

    fn allows(self, kind: ParamKind) -> bool {
        match kind {
            ParamKind::Weight => self.weights,
            ParamKind::Beta => self.beta,
            ParamKind::Alpha => self.alpha,
        }
    }

    fn updates_architecture(self) -> bool {
        self.beta || self.alpha
    }
}

/// One logged gate value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub iteration: u64,
    pub connection: Connection,
    pub gate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuRecord {
    pub loop_index: usize,
    pub mu: f64,
}

/// Mini-batches drawn as a function of the global iteration counter.
pub struct DataStream<'a> {
    data: &'a Dataset,
    sampler: Sampler,
}

impl<'a> DataStream<'a> {
    pub fn new(data: &'a Dataset, seed: u64, batch_size: usize) -> Self {
        DataStream {
            data,
            sampler: Sampler::new(seed, batch_size),
        }
    }

    pub fn batches_per_epoch(&self) -> u64 {
        self.sampler.batches_per_epoch(self.data)
    }
}

/// Everything that evolves during a search.
#[derive(Clone, Debug)]
pub struct SearchState {
    pub params: ParamStore,
    pub velocity: Vec<f64>,
    /// Parameters held fixed regardless of phase flags.
    pub frozen: Vec<bool>,
    /// Only grows.
    pub pruned: Pruned,
    pub iteration: u64,
    pub loop_index: usize,
    pub phase: Option<MaskLabel>,
    pub discretizing: bool,
    pub mu: f64,
    pub track: Vec<Connection>,
    pub trajectory: Vec<GateRecord>,
    pub timeline: Vec<PruneEvent>,
    pub mu_history: Vec<MuRecord>,
    /// Interleaved pairs among alive connections of every
    /// architecture-updating phase.
    pub interleaved_pairs_seen: usize,
}

impl SearchState {
    pub fn new(params: ParamStore, track: Vec<Connection>) -> Self {
        let n = params.len();
        SearchState {
            params,
            velocity: vec![0.0; n],
            frozen: vec![false; n],
            pruned: Pruned::default(),
            iteration: 0,
            loop_index: 0,
            phase: None,
            discretizing: false,
            mu: 0.0,
            track,
            trajectory: Vec::new(),
            timeline: Vec::new(),
            mu_history: Vec::new(),
            interleaved_pairs_seen: 0,
        }
    }

    pub fn architecture(&self) -> DiscreteArchitecture {
        self.pruned.architecture(self.params.supernet())
    }

    fn log_gates(&mut self) {
        for &c in &self.track {
            self.trajectory.push(GateRecord {
                iteration: self.iteration,
                connection: c,
                gate: self.params.edge_gate(c),
            });
        }
    }
}

fn numerical(iteration: u64, detail: String) -> Error {
    Error::Numerical { iteration, detail }
}

/// Runs `iterations` momentum-SGD steps on `mask` minus the pruned set.
///
/// Only parameters that took part in the forward pass and whose kind is
/// enabled by `flags` move; all others stay bit-identical. Tracked gates are
/// logged after every step.
pub fn run_phase(
    state: &mut SearchState,
    config: &SearchConfig,
    mask: &SampleMask,
    iterations: u64,
    flags: UpdateFlags,
    stream: &mut DataStream<'_>,
) -> Result<()> {
    run_phase_with(state, config, mask, iterations, flags, stream, |_| 0.0)
}

/// [`run_phase`] with `extra` called after every backward pass; it may add
/// gradient terms to the store and returns the matching loss term.
pub fn run_phase_with(
    state: &mut SearchState,
    config: &SearchConfig,
    mask: &SampleMask,
    iterations: u64,
    flags: UpdateFlags,
    stream: &mut DataStream<'_>,
    mut extra: impl FnMut(&mut ParamStore) -> f64,
) -> Result<()> {
    if mask.label == MaskLabel::WarmUp && flags.updates_architecture() {
        return Err(Error::Domain("a warm-up phase may only update network weights".into()));
    }
    state.phase = Some(mask.label);
    let reg = (state.discretizing && flags.updates_architecture()).then(|| RegularizerWeights {
        mu1: if flags.beta { state.mu * config.mu1 } else { 0.0 },
        mu2: if flags.alpha { state.mu * config.mu2 } else { 0.0 },
    });
    for _ in 0..iterations {
        let it = state.iteration;
        let batch = stream.sampler.batch(stream.data, it);
        let pass = forward_mixed(&state.params, mask, &state.pruned, &batch, reg).map_err(|e| match e {
            Error::Numerical { detail, .. } => numerical(it, format!("{} phase: {detail}", mask.label)),
            other => other,
        })?;
        let loss = pass.loss();
        if !loss.is_finite() {
            return Err(numerical(
                it,
                format!(
                    "{} phase: loss {loss} (cross-entropy {}), mu {}",
                    mask.label,
                    pass.cross_entropy_value(),
                    state.mu
                ),
            ));
        }
        pass.backward(&mut state.params)?;
        let extra_loss = extra(&mut state.params);
        if !extra_loss.is_finite() {
            return Err(numerical(it, format!("{} phase: extra loss term {extra_loss}", mask.label)));
        }
        let store = &state.params;
        let mut updates = Vec::new();
        for i in 0..store.len() {
            if !store.participating()[i] || state.frozen[i] {
                continue;
            }
            let kind = store.kind_of(i);
            if !flags.allows(kind) {
                continue;
            }
            let w = store.values()[i];
            let (lr, decay) = match kind {
                ParamKind::Weight => (config.lr_weights, config.weight_decay),
                _ => (config.lr_arch, 0.0),
            };
            let g = store.grads()[i] + decay * w;
            if !g.is_finite() {
                return Err(numerical(it, format!("{} phase: non-finite gradient at offset {i}", mask.label)));
            }
            let v = config.momentum * state.velocity[i] + g;
            updates.push((i, v, w - lr * v));
        }
        let values = state.params.values_mut();
        for &(i, _, w) in &updates {
            values[i] = w;
        }
        for (i, v, _) in updates {
            state.velocity[i] = v;
        }
        state.log_gates();
        state.iteration += 1;
    }
    Ok(())
}

/// Counts interleaved pairs among alive connections of a mask.
fn audit_mask(state: &SearchState, mask: &SampleMask) -> usize {
    let spec = state.params.spec();
    let alive = mask
        .active
        .iter()
        .copied()
        .filter(|&c| state.pruned.edge_alive(spec, c))
        .collect();
    find_interleaved_pairs(&alive).len()
}

/// Final statistics of one search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub if_sampling: bool,
    pub derivation: Derivation,
    pub madds_budget: Option<u64>,
    pub depth: usize,
    pub madds: u64,
    pub params: usize,
    pub iterations: u64,
    pub loops: usize,
    pub mixing: String,
    pub final_mu: f64,
    pub mu_history: Vec<MuRecord>,
    pub timeline: Vec<PruneEvent>,
    pub forced_prunes: usize,
    pub interleaved_pairs_seen: usize,
    pub tracked: Vec<Connection>,
    pub final_gates: Vec<GateRecord>,
    /// Written separately as CSV.
    #[serde(skip)]
    pub trajectory: Vec<GateRecord>,
}

/// Serializable snapshot taken between loops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchCheckpoint {
    pub format: String,
    pub config: SearchConfig,
    pub params: Checkpoint,
    pub velocity: Vec<f64>,
    pub pruned: Pruned,
    pub iteration: u64,
    pub loop_index: usize,
    pub discretizing: bool,
    pub mu: f64,
    pub trajectory: Vec<GateRecord>,
    pub timeline: Vec<PruneEvent>,
    pub mu_history: Vec<MuRecord>,
    pub interleaved_pairs_seen: usize,
    pub done: bool,
}

pub const CHECKPOINT_FORMAT: &str = "ifnas-search-checkpoint";

/// Drives a search loop by loop so it can be checkpointed between loops.
pub struct Searcher<'a> {
    config: SearchConfig,
    stream: DataStream<'a>,
    state: SearchState,
    warmup_iterations: u64,
    alpha_start: u64,
    done: bool,
}

fn default_track(config: &SearchConfig) -> Result<Vec<Connection>> {
    let supernet = build_supernet(&config.space)?;
    if config.track.is_empty() {
        return Ok(supernet.incoming(0, config.space.output_node(0)).collect());
    }
    for c in &config.track {
        if !supernet.contains(c) {
            return Err(Error::spec("track", format!("{c} is not a supernet connection")));
        }
    }
    Ok(config.track.clone())
}

impl<'a> Searcher<'a> {
    pub fn new(config: SearchConfig, data: &'a Dataset) -> Result<Self> {
        config.validate()?;
        let supernet = build_supernet(&config.space)?;
        let params = ParamStore::new(&supernet, &config.init, config.seed)?;
        let state = SearchState::new(params, default_track(&config)?);
        Ok(Self::assemble(config, data, state, false))
    }

    pub fn resume(ck: SearchCheckpoint, data: &'a Dataset) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse(format!("expected format `{CHECKPOINT_FORMAT}`, found `{}`", ck.format)));
        }
        ck.config.validate()?;
        let params = ParamStore::from_checkpoint(&ck.params)?;
        if params.spec() != &ck.config.space {
            return Err(Error::Parse("checkpoint parameters do not match its config space".into()));
        }
        if ck.velocity.len() != params.len() {
            return Err(Error::Parse("checkpoint velocity length mismatch".into()));
        }
        let mut state = SearchState::new(params, default_track(&ck.config)?);
        state.velocity = ck.velocity;
        state.pruned = ck.pruned;
        state.iteration = ck.iteration;
        state.loop_index = ck.loop_index;
        state.discretizing = ck.discretizing;
        state.mu = ck.mu;
        state.trajectory = ck.trajectory;
        state.timeline = ck.timeline;
        state.mu_history = ck.mu_history;
        state.interleaved_pairs_seen = ck.interleaved_pairs_seen;
        Ok(Self::assemble(ck.config, data, state, ck.done))
    }

    fn assemble(config: SearchConfig, data: &'a Dataset, state: SearchState, done: bool) -> Self {
        let stream = DataStream::new(data, config.seed, config.batch_size);
        let epoch = stream.batches_per_epoch();
        let warmup_iterations = config.warmup_epochs as u64 * epoch;
        let alpha_start = warmup_iterations + config.alpha_delay_epochs as u64 * epoch;
        Searcher {
            config,
            stream,
            state,
            warmup_iterations,
            alpha_start,
            done,
        }
    }

    pub fn checkpoint(&self) -> SearchCheckpoint {
        let s = &self.state;
        SearchCheckpoint {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            params: s.params.to_checkpoint(),
            velocity: s.velocity.clone(),
            pruned: s.pruned.clone(),
            iteration: s.iteration,
            loop_index: s.loop_index,
            discretizing: s.discretizing,
            mu: s.mu,
            trajectory: s.trajectory.clone(),
            timeline: s.timeline.clone(),
            mu_history: s.mu_history.clone(),
            interleaved_pairs_seen: s.interleaved_pairs_seen,
            done: self.done,
        }
    }

    pub fn state(&self) -> &SearchState {
        &self.state
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn budget_met(&self) -> Result<bool> {
        Ok(match self.config.madds_budget {
            Some(b) => madds(&self.state.architecture())? <= b,
            None => false,
        })
    }

    fn loop_masks(&self) -> Result<Vec<SampleMask>> {
        let supernet = self.state.params.supernet();
        let full = warmup_mask(supernet);
        let l = self.config.space.max_len;
        let mut masks = Vec::new();
        if self.config.loop_warmup {
            masks.push(full.clone());
        }
        for lambda in 1..=l {
            masks.push(if self.config.if_sampling {
                extract_subsupernet(supernet, lambda)?
            } else {
                SampleMask {
                    active: full.active.clone(),
                    label: MaskLabel::Group(lambda),
                }
            });
        }
        Ok(masks)
    }

    /// Runs the global warm-up if still pending, then one full loop.
    pub fn step_loop(&mut self) -> Result<()> {
        if self.done {
            return Ok(());
        }
        let cfg = self.config.clone();
        if self.state.iteration < self.warmup_iterations {
            let full = warmup_mask(self.state.params.supernet());
            let remaining = self.warmup_iterations - self.state.iteration;
            run_phase(&mut self.state, &cfg, &full, remaining, UpdateFlags::WARM_UP, &mut self.stream)?;
        }
        self.state.loop_index += 1;
        let mut pruned_any = false;
        for mask in self.loop_masks()? {
            let warm = mask.label == MaskLabel::WarmUp;
            let alpha_on = self.state.iteration >= self.alpha_start;
            if alpha_on && !self.state.discretizing {
                self.state.discretizing = true;
                self.state.mu = cfg.mu_initial;
            }
            let flags = if warm {
                UpdateFlags::WARM_UP
            } else {
                self.state.interleaved_pairs_seen += audit_mask(&self.state, &mask);
                UpdateFlags {
                    weights: true,
                    beta: true,
                    alpha: alpha_on,
                }
            };
            run_phase(
                &mut self.state,
                &cfg,
                &mask,
                cfg.iterations_per_step as u64,
                flags,
                &mut self.stream,
            )?;
            if !warm && self.state.discretizing {
                let outcome = prune_step(&mut self.state, cfg.prune_threshold)?;
                pruned_any |= !outcome.events.is_empty();
                if self.budget_met()? {
                    self.done = true;
                    break;
                }
            }
        }
        if self.state.discretizing && !pruned_any && !self.done {
            self.state.mu *= cfg.mu_growth;
        }
        self.state.mu_history.push(MuRecord {
            loop_index: self.state.loop_index,
            mu: self.state.mu,
        });
        if self.state.loop_index >= cfg.max_loops {
            self.done = true;
        }
        Ok(())
    }

    /// Runs loops until the budget is met or the loop limit is hit, then
    /// derives the final architecture.
    pub fn run(mut self) -> Result<(DiscreteArchitecture, RunReport)> {
        while !self.done {
            self.step_loop()?;
        }
        self.finish()
    }

    /// Derives the architecture from the current state. Past the loop limit
    /// the weakest remaining gates are removed until the budget holds.
    pub fn finish(mut self) -> Result<(DiscreteArchitecture, RunReport)> {
        let cfg = self.config.clone();
        if cfg.derivation == Derivation::OneInputPerNode {
            keep_one_input(&mut self.state)?;
        }
        let mut forced = 0;
        if let Some(budget) = cfg.madds_budget {
            while madds(&self.state.architecture())? > budget {
                if prune_weakest(&mut self.state)?.is_none() {
                    let core = cheapest_core(&self.state);
                    let spec = &cfg.space;
                    let minimum = crate::cost::fixed_madds(spec)
                        + core
                            .iter()
                            .map(|&(c, o)| {
                                let st = &spec.stages[c.stage];
                                crate::cost::op_madds(o, st.channels, st.spatial_size)
                            })
                            .sum::<u64>();
                    return Err(Error::InfeasibleBudget { budget, minimum });
                }
                forced += 1;
            }
        }
        let arch = self.state.architecture();
        let violations = validate(&arch);
        if !violations.is_empty() {
            return Err(Error::InvalidArchitecture(violations));
        }
        let s = &self.state;
        let final_gates = s
            .params
            .supernet()
            .connections()
            .iter()
            .filter(|&&c| s.pruned.edge_alive(&cfg.space, c))
            .map(|&c| GateRecord {
                iteration: s.iteration,
                connection: c,
                gate: s.params.edge_gate(c),
            })
            .collect();
        let report = RunReport {
            seed: cfg.seed,
            if_sampling: cfg.if_sampling,
            derivation: cfg.derivation,
            madds_budget: cfg.madds_budget,
            depth: depth(&arch)?,
            madds: madds(&arch)?,
            params: crate::cost::param_count(&arch)?,
            iterations: s.iteration,
            loops: s.loop_index,
            mixing: MIXING_FORMULA.into(),
            final_mu: s.mu,
            mu_history: s.mu_history.clone(),
            timeline: s.timeline.clone(),
            forced_prunes: forced,
            interleaved_pairs_seen: s.interleaved_pairs_seen,
            tracked: s.track.clone(),
            final_gates,
            trajectory: s.trajectory.clone(),
        };
        Ok((arch, report))
    }
}

/// Runs a complete search on `dataset`.
pub fn run_search(config: &SearchConfig, dataset: &Dataset) -> Result<(DiscreteArchitecture, RunReport)> {
    Searcher::new(config.clone(), dataset)?.run()
}

/// `iteration,connection,gate` rows.
pub fn trajectory_csv(records: &[GateRecord]) -> String {
    let mut out = String::from("iteration,connection,gate\n");
    for r in records {
        out.push_str(&format!("{},\"{}\",{}\n", r.iteration, r.connection, r.gate));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::InitConfig;
    use crate::interleave::group_of;
    use crate::space::{OperatorKind, SupernetSpec};

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn quick(seed: u64, if_sampling: bool) -> SearchConfig {
        SearchConfig {
            warmup_epochs: 1,
            alpha_delay_epochs: 0,
            iterations_per_step: 3,
            max_loops: 2,
            ..SearchConfig::toy(seed, if_sampling)
        }
    }

    fn fresh(cfg: &SearchConfig) -> SearchState {
        let supernet = build_supernet(&cfg.space).unwrap();
        SearchState::new(ParamStore::new(&supernet, &cfg.init, cfg.seed).unwrap(), Vec::new())
    }

    fn arch_params(s: &SearchState) -> Vec<f64> {
        let p = &s.params;
        (0..p.len()).filter(|&i| p.kind_of(i) != ParamKind::Weight).map(|i| p.values()[i]).collect()
    }

    #[test]
    fn warm_up_leaves_architecture_untouched() {
        let cfg = quick(1, true);
        let data = Dataset::load(&cfg.data, &cfg.space, cfg.seed).unwrap();
        let mut state = fresh(&cfg);
        let before = arch_params(&state);
        let weights_before = state.params.values().to_vec();
        let mut stream = DataStream::new(&data, cfg.seed, cfg.batch_size);
        let full = warmup_mask(state.params.supernet());
        run_phase(&mut state, &cfg, &full, 3, UpdateFlags::WARM_UP, &mut stream).unwrap();
        assert_eq!(arch_params(&state), before);
        assert_ne!(state.params.values(), &weights_before[..]);
        let bad = UpdateFlags {
            beta: true,
            ..UpdateFlags::WARM_UP
        };
        assert!(run_phase(&mut state, &cfg, &full, 1, bad, &mut stream).is_err());
    }

    #[test]
    fn group_phase_touches_only_its_group() {
        let cfg = quick(2, true);
        let data = Dataset::load(&cfg.data, &cfg.space, cfg.seed).unwrap();
        let mut state = fresh(&cfg);
        let supernet = state.params.supernet().clone();
        let mask = extract_subsupernet(&supernet, 2).unwrap();
        let batch = data.gather(&(0..8).collect::<Vec<_>>());
        let pass = forward_mixed(&state.params, &mask, &state.pruned, &batch, None).unwrap();
        pass.backward(&mut state.params).unwrap();
        for &c in supernet.connections() {
            let g = state.params.grads()[state.params.beta_offset(c)];
            let expected = c.is_backbone() || group_of(c, cfg.space.max_len).unwrap() == 2;
            assert_eq!(g != 0.0, expected, "{c}");
        }
    }

    fn two_node_state(gates: [(usize, usize, f64); 3]) -> SearchState {
        let spec = SupernetSpec::single_stage(2, 2, 1, 2, vec![OperatorKind::Skip], 2);
        let supernet = build_supernet(&spec).unwrap();
        let mut p = ParamStore::new(&supernet, &InitConfig::default(), 0).unwrap();
        for (src, tgt, g) in gates {
            p.set_beta(Connection::new(0, src, tgt), logit(g));
        }
        SearchState::new(p, Vec::new())
    }

    #[test]
    fn prunes_exactly_the_gates_below_threshold() {
        let mut s = two_node_state([(0, 2, 0.005), (0, 1, 0.5), (1, 2, 0.9)]);
        let out = prune_step(&mut s, 0.01).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].connection, Connection::new(0, 0, 2));
        assert_eq!(s.pruned.edges.iter().copied().collect::<Vec<_>>(), vec![Connection::new(0, 0, 2)]);
        assert!(!out.raise_mu);
        assert!(prune_step(&mut s, 0.01).unwrap().raise_mu);
    }

    #[test]
    fn protected_output_edge_is_skipped() {
        // (0,1) goes first and takes (1,2) with it; (0,2) is then the only
        // way into the output and must stay.
        let mut s = two_node_state([(0, 1, 0.004), (1, 2, 0.5), (0, 2, 0.006)]);
        let out = prune_step(&mut s, 0.01).unwrap();
        assert_eq!(out.protected, vec![Connection::new(0, 0, 2)]);
        let arch = s.architecture();
        assert!(validate(&arch).is_empty());
        assert_eq!(arch.edges().into_iter().collect::<Vec<_>>(), vec![Connection::new(0, 0, 2)]);
        assert!(s.timeline.iter().any(|e| e.cause == PruneCause::Cleanup));
    }

    #[test]
    fn core_path_survives_forced_pruning() {
        let mut s = two_node_state([(0, 1, 0.3), (1, 2, 0.2), (0, 2, 0.9)]);
        let core = cheapest_core(&s);
        assert_eq!(core.len(), 1);
        while prune_weakest(&mut s).unwrap().is_some() {}
        assert_eq!(s.architecture().alive, core);
    }

    #[test]
    fn one_input_per_node_keeps_the_strongest() {
        let mut s = two_node_state([(0, 1, 0.6), (1, 2, 0.7), (0, 2, 0.65)]);
        keep_one_input(&mut s).unwrap();
        let edges: Vec<_> = s.architecture().edges().into_iter().collect();
        assert_eq!(edges, vec![Connection::new(0, 0, 1), Connection::new(0, 1, 2)]);
    }

    #[test]
    fn replay_is_deterministic() {
        let cfg = quick(3, true);
        let data = Dataset::load(&cfg.data, &cfg.space, cfg.seed).unwrap();
        let run = || {
            let mut s = Searcher::new(cfg.clone(), &data).unwrap();
            s.step_loop().unwrap();
            (s.state().trajectory.clone(), s.state().params.values().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let cfg = quick(4, true);
        let data = Dataset::load(&cfg.data, &cfg.space, cfg.seed).unwrap();
        let mut straight = Searcher::new(cfg.clone(), &data).unwrap();
        straight.step_loop().unwrap();
        straight.step_loop().unwrap();

        let mut first = Searcher::new(cfg.clone(), &data).unwrap();
        first.step_loop().unwrap();
        let text = serde_json::to_string(&first.checkpoint()).unwrap();
        let mut resumed = Searcher::resume(serde_json::from_str(&text).unwrap(), &data).unwrap();
        resumed.step_loop().unwrap();
        assert_eq!(resumed.checkpoint(), straight.checkpoint());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = SearchConfig::toy(0, true);
        cfg.prune_threshold = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = SearchConfig::toy(0, true);
        cfg.madds_budget = Some(1);
        assert!(matches!(cfg.validate(), Err(Error::InfeasibleBudget { .. })));
    }
}

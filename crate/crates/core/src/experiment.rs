//! Candidate-competition experiment: one stage, every architectural
//! parameter frozen except the edge gates of three competing inputs of the
//! output node, with `k` interfering connections added to the sampled set.

use serde::{Deserialize, Serialize};

use crate::autodiff::{InitConfig, ParamStore};
use crate::data::{DataConfig, Dataset};
use crate::error::{Error, Result};
use crate::interleave::{inject_interleaves, MaskLabel, SampleMask};
use crate::analysis::{summarize_trajectories, TrajectorySummary};
use crate::search::{polarization, run_phase, run_phase_with, DataStream, GateRecord, SearchConfig, SearchState, UpdateFlags};
use crate::space::{build_supernet, Connection, OperatorKind, SupernetSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    pub seed: u64,
    /// Number of interfering connections, 0 to 3.
    pub k: usize,
    #[serde(rename = "L")]
    pub max_len: usize,
    pub nodes: usize,
    pub channels: usize,
    pub spatial_size: usize,
    pub operator_set: Vec<OperatorKind>,
    pub num_classes: usize,
    /// Lengths of the competing inputs of the last node.
    pub candidates: Vec<usize>,
    pub data: DataConfig,
    pub init: InitConfig,
    pub batch_size: usize,
    pub warmup_iterations: u64,
    pub iterations: u64,
    pub lr_weights: f64,
    pub lr_arch: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Weight of the polarizing regularizer over the candidate gates.
    pub mu: f64,
    /// Whether the injected connections' edge gates train alongside the candidates.
    pub train_injected: bool,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Figure1Config {
            seed: 0,
            k: 0,
            max_len: 6,
            nodes: 8,
            channels: 4,
            spatial_size: 4,
            operator_set: vec![OperatorKind::SepConv3x3, OperatorKind::Skip],
            num_classes: 4,
            candidates: vec![1, 3, 6],
            data: DataConfig {
                teacher_depth: 12,
                ..DataConfig::default()
            },
            init: InitConfig::default(),
            batch_size: 32,
            warmup_iterations: 100,
            iterations: 400,
            lr_weights: 0.05,
            lr_arch: 0.5,
            momentum: 0.9,
            weight_decay: 3e-5,
            mu: 0.0,
            train_injected: false,
        }
    }
}

impl Figure1Config {
    pub fn space(&self) -> SupernetSpec {
        SupernetSpec::single_stage(
            self.max_len,
            self.nodes,
            self.channels,
            self.spatial_size,
            self.operator_set.clone(),
            self.num_classes,
        )
    }

    pub fn candidate_connections(&self) -> Vec<Connection> {
        self.candidates
            .iter()
            .map(|&l| Connection::new(0, self.nodes.saturating_sub(l), self.nodes))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.space().validate()?;
        if self.k > 3 {
            return Err(Error::spec("k", "must lie in 0..=3"));
        }
        if self.candidates.is_empty() || self.candidates.iter().any(|&l| l == 0 || l > self.max_len.min(self.nodes)) {
            return Err(Error::spec("candidates", "lengths must lie in 1..=min(L, nodes)"));
        }
        if self.batch_size == 0 {
            return Err(Error::spec("batch_size", "must be positive"));
        }
        Ok(())
    }

    fn optimizer(&self) -> SearchConfig {
        SearchConfig {
            seed: self.seed,
            lr_weights: self.lr_weights,
            lr_arch: self.lr_arch,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            ..SearchConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Figure1Result {
    pub seed: u64,
    pub k: usize,
    pub candidates: Vec<Connection>,
    pub injected: Vec<Connection>,
    pub summary: TrajectorySummary,
    #[serde(skip)]
    pub trajectory: Vec<GateRecord>,
}

/// The sampled set: backbone plus the candidates, before injection.
pub fn base_mask(config: &Figure1Config) -> Result<SampleMask> {
    let supernet = build_supernet(&config.space())?;
    let mut active: std::collections::BTreeSet<Connection> =
        supernet.connections().iter().copied().filter(|c| c.is_backbone()).collect();
    active.extend(config.candidate_connections());
    Ok(SampleMask {
        active,
        label: MaskLabel::Group(1),
    })
}

/// Warm-up of the weights, then joint training of the weights and the
/// candidate edge gates; gates are logged once per training iteration.
pub fn run_figure1(config: &Figure1Config, data: &Dataset) -> Result<Figure1Result> {
    config.validate()?;
    let space = config.space();
    let supernet = build_supernet(&space)?;
    let candidates = config.candidate_connections();
    let injection = inject_interleaves(&supernet, &base_mask(config)?, config.k, &candidates)?;

    let params = ParamStore::new(&supernet, &config.init, config.seed)?;
    let mut state = SearchState::new(params, Vec::new());
    for i in 0..state.params.len() {
        state.frozen[i] = state.params.kind_of(i) != crate::autodiff::ParamKind::Weight;
    }
    let trainable = candidates.iter().chain(injection.injected.iter().filter(|_| config.train_injected));
    for &c in trainable {
        let i = state.params.beta_offset(c);
        state.frozen[i] = false;
    }
    let opt = config.optimizer();
    let mut stream = DataStream::new(data, config.seed, config.batch_size);

    let warm = SampleMask {
        active: injection.mask.active.clone(),
        label: MaskLabel::WarmUp,
    };
    run_phase(&mut state, &opt, &warm, config.warmup_iterations, UpdateFlags::WARM_UP, &mut stream)?;
    state.track = candidates.clone();
    let flags = UpdateFlags {
        weights: true,
        beta: true,
        alpha: false,
    };
    let betas: Vec<usize> = candidates.iter().map(|&c| state.params.beta_offset(c)).collect();
    let mu = config.mu;
    let polarize = |store: &mut ParamStore| -> f64 {
        if mu == 0.0 {
            return 0.0;
        }
        let raw: Vec<f64> = betas.iter().map(|&i| store.values()[i]).collect();
        let (value, grads) = polarization(&raw);
        for (&i, g) in betas.iter().zip(grads) {
            store.add_grad(i, mu * g);
        }
        mu * value
    };
    run_phase_with(&mut state, &opt, &injection.mask, config.iterations, flags, &mut stream, polarize)?;

    let summary = summarize_trajectories(&state.trajectory, &candidates)?;
    Ok(Figure1Result {
        seed: config.seed,
        k: config.k,
        candidates,
        injected: injection.injected,
        summary,
        trajectory: state.trajectory,
    })
}

/// Dataset for a figure-1 run, shaped by its space.
pub fn figure1_dataset(config: &Figure1Config) -> Result<Dataset> {
    Dataset::load(&config.data, &config.space(), config.seed)
}

use serde::{Deserialize, Serialize};

use crate::autodiff::InitConfig;
use crate::data::DataConfig;
use crate::error::{Error, Result};
use crate::space::{Connection, SupernetSpec};

/// MAdds budget of [`SearchConfig::toy`].
pub const TOY_BUDGET: u64 = 5033;

/// How the final architecture is read off the pruned supernet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    /// Prune until the MAdds budget is met.
    Budget,
    /// Run a fixed number of loops, then keep the strongest input of every
    /// surviving node.
    OneInputPerNode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub seed: u64,
    /// Interleaving-free sub-supernet sampling; off trains the whole
    /// supernet in every phase.
    pub if_sampling: bool,
    pub space: SupernetSpec,
    pub data: DataConfig,
    pub init: InitConfig,
    pub batch_size: usize,
    /// Global warm-up before any architecture update.
    pub warmup_epochs: usize,
    /// Epochs after the warm-up before operator parameters start to move.
    pub alpha_delay_epochs: usize,
    pub iterations_per_step: usize,
    /// Whether every IF loop starts with a whole-supernet warm-up step.
    pub loop_warmup: bool,
    pub lr_weights: f64,
    pub lr_arch: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Discretization weight once operator updates begin.
    pub mu_initial: f64,
    /// Factor applied to the weight after a loop without prune events.
    pub mu_growth: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub prune_threshold: f64,
    pub madds_budget: Option<u64>,
    pub derivation: Derivation,
    pub max_loops: usize,
    /// Connections whose gates are logged every iteration; empty selects
    /// the inputs of the first stage's output node.
    pub track: Vec<Connection>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seed: 0,
            if_sampling: true,
            space: SupernetSpec::default(),
            data: DataConfig::default(),
            init: InitConfig::default(),
            batch_size: 32,
            warmup_epochs: 20,
            alpha_delay_epochs: 10,
            iterations_per_step: 100,
            loop_warmup: true,
            lr_weights: 0.05,
            lr_arch: 0.5,
            momentum: 0.9,
            weight_decay: 3e-5,
            mu_initial: 0.01,
            mu_growth: 2.0,
            mu1: 1.0,
            mu2: 1.0,
            prune_threshold: 0.01,
            madds_budget: None,
            derivation: Derivation::Budget,
            max_loops: 50,
            track: Vec::new(),
        }
    }
}

impl SearchConfig {
    /// Desk-scale setting used by the committed example config and the test
    /// suites: three 8-node stages at `L = 4`, 4/8/16 channels on 4/2/1 maps,
    /// a 256-sample synthetic task and a budget at one tenth of the range
    /// between the cheapest valid and the full architecture.
    pub fn toy(seed: u64, if_sampling: bool) -> Self {
        let mut space = SupernetSpec::default();
        for (i, st) in space.stages.iter_mut().enumerate() {
            st.node_count = 8;
            st.channels = 4 << i;
            st.spatial_size = 4 >> i;
        }
        SearchConfig {
            seed,
            if_sampling,
            space,
            data: DataConfig {
                samples: 256,
                teacher_depth: 12,
                ..DataConfig::default()
            },
            batch_size: 16,
            warmup_epochs: 5,
            alpha_delay_epochs: 2,
            iterations_per_step: 10,
            max_loops: 40,
            madds_budget: Some(TOY_BUDGET),
            ..SearchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        let bad = |field: &str, reason: &str| Err(Error::spec(field, reason));
        if !(self.prune_threshold > 0.0 && self.prune_threshold < 1.0) {
            return bad("prune_threshold", "must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.iterations_per_step == 0 {
            return bad("iterations_per_step", "must be positive");
        }
        if self.max_loops == 0 {
            return bad("max_loops", "must be positive");
        }
        if !(self.mu_growth >= 1.0) {
            return bad("mu_growth", "must be at least 1");
        }
        if !(self.mu_initial >= 0.0) {
            return bad("mu_initial", "must be non-negative");
        }
        for (name, v) in [
            ("lr_weights", self.lr_weights),
            ("lr_arch", self.lr_arch),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(name, "must be finite and non-negative");
            }
        }
        if self.derivation == Derivation::Budget && self.madds_budget.is_none() {
            return bad("madds_budget", "required by the budget derivation");
        }
        if let Some(budget) = self.madds_budget {
            let minimum = crate::cost::minimal_valid_madds(&self.space)?;
            if budget < minimum {
                return Err(Error::InfeasibleBudget { budget, minimum });
            }
        }
        Ok(())
    }
}

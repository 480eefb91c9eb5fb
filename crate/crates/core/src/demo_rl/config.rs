use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot_reward::OtConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    Environment,
    OptimalTransport,
}

/// Hyperparameters of one demonstration-guided RL run. Build one from
/// [`crate::profile::Profile`] rather than by hand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlConfig {
    pub lr: f64,
    pub gamma: f64,
    pub n_step: usize,
    pub batch_size: usize,
    /// Environment steps between agent updates.
    pub update_every: usize,
    /// Critic target soft-update rate.
    pub tau: f64,
    pub buffer_capacity: usize,
    /// No gradient updates before this many environment steps.
    pub seed_frames: usize,
    /// Uniform-random actions for this many environment steps.
    pub exploration_steps: usize,
    pub exploration_std: f64,
    /// Fixed weight of the BC regularizer.
    pub alpha: f64,
    /// Trade-off between the Q term `(1 - lambda)` and the BC term `lambda`.
    pub lambda: f64,
    pub total_steps: usize,
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub bc_epochs: usize,
    pub bc_lr: f64,
    pub reward_mode: RewardMode,
    /// Actor maximises `min(Q1, Q2)` instead of `Q1` alone.
    pub actor_min_q: bool,
    pub ot: OtConfig,
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("rl.{field} {why}")));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", "must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda", "must lie in [0, 1]");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha", "must be nonnegative");
        }
        if self.n_step == 0 {
            return bad("n_step", "must be at least 1");
        }
        if !(self.lr > 0.0) || !(self.bc_lr > 0.0) {
            return bad("lr", "and bc_lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", "must lie in [0, 1]");
        }
        if self.exploration_std < 0.0 {
            return bad("exploration_std", "must be nonnegative");
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("update_every", self.update_every),
            ("buffer_capacity", self.buffer_capacity),
            ("hidden_dim", self.hidden_dim),
            ("hidden_layers", self.hidden_layers),
        ] {
            if v == 0 {
                return bad(name, "must be positive");
            }
        }
        self.ot.validate()
    }
}

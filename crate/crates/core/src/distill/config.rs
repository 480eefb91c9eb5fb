use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings for distilling task experts into one policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Transitions kept per task (the most recent ones of its buffer).
    pub buffer_size: usize,
    pub grad_steps: usize,
    /// Student width; `None` copies the teachers' architecture.
    #[serde(default)]
    pub hidden_dim: Option<usize>,
    #[serde(default)]
    pub hidden_layers: Option<usize>,
    /// Weight of the distillation term when it is added to RL updates.
    pub online_distill_weight: f64,
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("distill.{field} {why}")));
        if !(self.lr > 0.0) {
            return bad("lr", "must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.buffer_size == 0 {
            return bad("buffer_size", "must be positive");
        }
        if self.hidden_dim == Some(0) || self.hidden_layers == Some(0) {
            return bad("hidden_dim", "and hidden_layers must be positive when set");
        }
        if !(self.online_distill_weight >= 0.0) {
            return bad("online_distill_weight", "must be nonnegative");
        }
        Ok(())
    }
}

//! Named hyperparameter profiles. Every default lives in the two tables
//! below so the values are never scattered across modules.

use serde::{Deserialize, Serialize};

use crate::demo_rl::{RewardMode, RlConfig};
use crate::distill::DistillConfig;
use crate::ot_reward::OtConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Scaled for a single CPU core.
    #[default]
    Desk,
    /// The published hyperparameters.
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Table {
    lr: f64,
    gamma: f64,
    n_step: usize,
    batch_size: usize,
    update_every: usize,
    tau: f64,
    buffer_capacity: usize,
    seed_frames: usize,
    exploration_steps: usize,
    exploration_std: f64,
    alpha: f64,
    lambda: f64,
    total_steps: usize,
    hidden_dim: usize,
    hidden_layers: usize,
    bc_epochs: usize,
    bc_lr: f64,
    ot_scale: f64,
    ot_target_update_period: u64,
    distill_lr: f64,
    distill_batch_size: usize,
    distill_buffer_size: usize,
    distill_grad_steps: usize,
    demos_per_task: usize,
    eval_episodes: usize,
}

const PAPER: Table = Table {
    lr: 1e-4,
    gamma: 0.99,
    n_step: 3,
    batch_size: 256,
    update_every: 2,
    tau: 0.01,
    buffer_capacity: 150_000,
    seed_frames: 12_000,
    exploration_steps: 2_000,
    exploration_std: 0.1,
    alpha: 0.3,
    lambda: 0.25,
    total_steps: 30_000,
    hidden_dim: 1024,
    hidden_layers: 2,
    bc_epochs: 3_000,
    bc_lr: 1e-3,
    ot_scale: 10.0,
    ot_target_update_period: 20_000,
    distill_lr: 5e-5,
    distill_batch_size: 256,
    distill_buffer_size: 30_000,
    distill_grad_steps: 50_000,
    demos_per_task: 2,
    eval_episodes: 10,
};

const DESK: Table = Table {
    buffer_capacity: 50_000,
    seed_frames: 1_000,
    exploration_steps: 500,
    hidden_dim: 64,
    lr: 3e-4,
    ..PAPER
};

impl Profile {
    fn table(self) -> &'static Table {
        match self {
            Profile::Desk => &DESK,
            Profile::Paper => &PAPER,
        }
    }

    pub fn rl_config(self) -> RlConfig {
        let t = self.table();
        RlConfig {
            lr: t.lr,
            gamma: t.gamma,
            n_step: t.n_step,
            batch_size: t.batch_size,
            update_every: t.update_every,
            tau: t.tau,
            buffer_capacity: t.buffer_capacity,
            seed_frames: t.seed_frames,
            exploration_steps: t.exploration_steps,
            exploration_std: t.exploration_std,
            alpha: t.alpha,
            lambda: t.lambda,
            total_steps: t.total_steps,
            hidden_dim: t.hidden_dim,
            hidden_layers: t.hidden_layers,
            bc_epochs: t.bc_epochs,
            bc_lr: t.bc_lr,
            reward_mode: RewardMode::Environment,
            actor_min_q: true,
            ot: OtConfig {
                scale: t.ot_scale,
                target_update_period: t.ot_target_update_period,
                ..OtConfig::default()
            },
        }
    }

    pub fn distill_config(self) -> DistillConfig {
        let t = self.table();
        DistillConfig {
            lr: t.distill_lr,
            batch_size: t.distill_batch_size,
            buffer_size: t.distill_buffer_size,
            grad_steps: t.distill_grad_steps,
            hidden_dim: None,
            hidden_layers: None,
            online_distill_weight: 1.0,
        }
    }

    pub fn demos_per_task(self) -> usize {
        self.table().demos_per_task
    }

    pub fn eval_episodes(self) -> usize {
        self.table().eval_episodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_profile_values() {
        let rl = Profile::Paper.rl_config();
        assert_eq!(rl.lr, 1e-4);
        assert_eq!(rl.gamma, 0.99);
        assert_eq!(rl.batch_size, 256);
        assert_eq!(rl.alpha, 0.3);
        assert_eq!(rl.lambda, 0.25);
        assert_eq!(rl.tau, 0.01);
        assert_eq!(rl.buffer_capacity, 150_000);
        assert_eq!(rl.seed_frames, 12_000);
        assert_eq!(rl.exploration_steps, 2_000);
        assert_eq!(rl.n_step, 3);
        assert_eq!(rl.update_every, 2);
        assert_eq!(rl.hidden_dim, 1024);
        assert_eq!(rl.ot.scale, 10.0);
        assert_eq!(rl.ot.target_update_period, 20_000);
        let d = Profile::Paper.distill_config();
        assert_eq!(d.lr, 5e-5);
        assert_eq!(d.buffer_size, 30_000);
        assert_eq!(d.batch_size, 256);
    }

    #[test]
    fn desk_profile_overrides() {
        let rl = Profile::Desk.rl_config();
        assert_eq!(rl.seed_frames, 1_000);
        assert_eq!(rl.exploration_steps, 500);
        assert_eq!(rl.buffer_capacity, 50_000);
        rl.validate().unwrap();
        Profile::Paper.rl_config().validate().unwrap();
    }
}

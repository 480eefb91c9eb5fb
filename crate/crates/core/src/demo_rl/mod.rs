//! Single-task demonstration-guided RL: BC pretraining followed by n-step
//! DDPG with clipped double Q-learning and a BC regularizer.

mod agent;
mod buffer;
mod config;
mod train;

pub use agent::{
    bc_pretrain, exploration_action, init_actor, init_critic, nstep_target, regression_gradient, regression_mse,
    ActorLoss, AgentBundle, RegressionBatch,
};
pub use buffer::{
    load_buffer, read_buffer, save_buffer, write_buffer, Episode, NStepBatch, ReplayBuffer, Transition, BUFFER_MAGIC,
    BUFFER_VERSION,
};
pub use config::{RewardMode, RlConfig};
pub use train::{
    expected_updates, fresh_actor, run_demo_guided_rl, train_agent, write_metrics_csv, AuxiliarySource,
    EpisodeMetrics, TrainOutput, METRICS_HEADER,
};

//! Optimal-transport trajectory-matching rewards.

mod reward;
mod sinkhorn;

pub use reward::{
    assign_episode_rewards, cosine_cost_matrix, demo_states, episode_states, ot_reward, ot_reward_from_features,
    AssignedRewards, FeaturePreprocessor, OtConfig,
};
pub use sinkhorn::{sinkhorn, CouplingMatrix, SinkhornParams};

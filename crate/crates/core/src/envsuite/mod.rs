//! Synthetic multi-task point-reaching environments, scripted experts,
//! demonstrations and evaluation.

mod demos;
mod env;

pub use demos::{
    collect_demonstrations, effective_tasks, evaluate_policy, expert_action, load_demonstrations,
    read_demonstrations, rollout, save_demonstrations, scripted_expert, write_demonstrations, ConstantPolicy,
    Policy, ScriptedExpert, Trajectory, EXPERT_KP,
};
pub use env::{point_reach_4, reset, step, EnvState, GoalEncoding, StepOutcome, TaskSpec, ACT_DIM, DT, OBS_DIM};

//! Behavior distillation of per-task experts, lifelong variants, and the
//! baselines they are compared against.

mod artifact;
mod config;
#[allow(clippy::module_inception)]
mod distill;

pub use artifact::{relabel_buffer, TaskArtifact};
pub use config::DistillConfig;
pub use distill::{
    behavior_distill, distill_batch, evaluate_stages, finetune_baseline, gcbc_baseline, init_student,
    lifelong_distill_offline, lifelong_online_variant, sampled_task, teacher_data, DistillOutput, FinetuneOutput,
    OnlineStage, StageGrid, TeacherData,
};

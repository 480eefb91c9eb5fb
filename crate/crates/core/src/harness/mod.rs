//! Configuration, orchestration, persistence and reporting.

mod config;
mod pipeline;
mod report;

pub use config::{load_config, ExperimentConfig, Mode, Overrides, Strategy, SuiteConfig};
pub use pipeline::{
    distill_mode, eval_mode, finetune, gcbc, gen_demos, lifelong_mode, multitask_distill, polytask_offline,
    polytask_online, report_mode, run_lifelong, run_pipeline, success_row, suite_demos, suite_experts, task_demos,
    train_expert, train_expert_mode, train_experts, ExpertRun, LifelongOutcome, RunSummary,
};
pub use report::{effective_tasks_svg, emit_report, load_report, task_svg, BenchmarkReport, StageRecord};

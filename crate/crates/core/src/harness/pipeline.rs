//! Orchestration of the pipeline stages and their on-disk layout:
//!
//! ```text
//! <out>/demos/task_<id>.ptdm
//! <out>/experts/task_<id>/{actor.ptwt, buffer.ptrb, manifest.txt, metrics.csv}
//! <out>/experts/summary.csv
//! <out>/distill/{policy.ptwt, gcbc.ptwt, summary.csv}
//! <out>/lifelong/<strategy>/{report.json, stages.csv, *.svg, stage_<i>.ptwt, metrics_stage_<i>.csv}
//! <out>/eval.csv
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use super::config::{ExperimentConfig, Mode, Strategy};
use super::report::{emit_report, load_report, BenchmarkReport};
use crate::demo_rl::{run_demo_guided_rl, write_metrics_csv, EpisodeMetrics};
use crate::distill::{
    behavior_distill, finetune_baseline, gcbc_baseline, lifelong_online_variant, DistillOutput, TaskArtifact,
};
use crate::envsuite::{
    collect_demonstrations, evaluate_policy, load_demonstrations, read_demonstrations, save_demonstrations,
    write_demonstrations, TaskSpec, Trajectory,
};
use crate::error::{Error, PathContext, Result};
use crate::numkit::io::{load_weights, save_weights};
use crate::numkit::MlpParams;
use crate::ot_reward::CouplingMatrix;
use crate::rng::task_seed;

/// What a pipeline run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub mode: Mode,
    /// Set by the lifelong mode.
    pub report: Option<BenchmarkReport>,
    pub files: Vec<PathBuf>,
}

fn write_text(path: &Path, body: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).at_path(parent)?;
    }
    fs::write(path, body).at_path(path)?;
    Ok(path.to_path_buf())
}

fn metrics_text(cfg: &ExperimentConfig, rows: &[EpisodeMetrics]) -> Result<String> {
    let mut buf = format!("# {}\n", cfg.provenance()).into_bytes();
    write_metrics_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("CSV is ASCII"))
}

fn demo_path(cfg: &ExperimentConfig, task_id: u32) -> PathBuf {
    cfg.out_dir.join("demos").join(format!("task_{task_id}.ptdm"))
}

fn expert_dir(cfg: &ExperimentConfig, task_id: u32) -> PathBuf {
    cfg.out_dir.join("experts").join(format!("task_{task_id}"))
}

fn lifelong_dir(cfg: &ExperimentConfig, strategy: Strategy) -> PathBuf {
    cfg.out_dir.join("lifelong").join(strategy.name())
}

/// Demonstrations for one task, exactly as they would read back from disk.
pub fn task_demos(cfg: &ExperimentConfig, spec: &TaskSpec) -> Result<Vec<Trajectory>> {
    let demos = collect_demonstrations(
        spec,
        cfg.suite.demos_per_task,
        cfg.suite.demo_noise,
        task_seed(cfg.seed, spec.task_id),
    )?;
    let mut bytes = Vec::new();
    write_demonstrations(&mut bytes, &demos)?;
    read_demonstrations(bytes.as_slice())
}

/// Demos for every suite task: read from `<out>/demos` when present,
/// generated otherwise (both give identical values).
pub fn suite_demos(cfg: &ExperimentConfig) -> Result<Vec<Vec<Trajectory>>> {
    cfg.suite
        .tasks
        .iter()
        .map(|spec| {
            let path = demo_path(cfg, spec.task_id);
            if path.exists() {
                load_demonstrations(&path)
            } else {
                task_demos(cfg, spec)
            }
            .map_err(|e| e.in_stage(format!("demos for task {}", spec.task_id)))
        })
        .collect()
}

pub fn gen_demos(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for spec in &cfg.suite.tasks {
        let demos = task_demos(cfg, spec).map_err(|e| e.in_stage(format!("gen-demos task {}", spec.task_id)))?;
        let path = demo_path(cfg, spec.task_id);
        fs::create_dir_all(path.parent().expect("has parent")).at_path(&path)?;
        save_demonstrations(&path, &demos)?;
        info!("task {}: wrote {} demonstrations", spec.task_id, demos.len());
        files.push(path);
    }
    Ok(files)
}

/// A trained task expert in its persisted form.
#[derive(Clone, Debug)]
pub struct ExpertRun {
    pub artifact: TaskArtifact,
    pub success: f64,
    pub metrics: Vec<EpisodeMetrics>,
    pub last_coupling: Option<CouplingMatrix>,
    pub wall_clock_s: f64,
}

pub fn train_expert(cfg: &ExperimentConfig, spec: &TaskSpec, demos: &[Trajectory]) -> Result<ExpertRun> {
    let started = Instant::now();
    let seed = task_seed(cfg.seed, spec.task_id);
    let out = run_demo_guided_rl(spec, demos, &cfg.rl, seed)?;
    let artifact = TaskArtifact::new(spec.task_id, out.bundle.actor, &out.buffer, cfg.distill.buffer_size, seed)?
        .relabeled()?
        .persisted()?;
    let success = evaluate_policy(&artifact.expert, spec, cfg.suite.eval_episodes, cfg.seed)?;
    info!("task {}: expert success {success}", spec.task_id);
    Ok(ExpertRun {
        artifact,
        success,
        metrics: out.metrics,
        last_coupling: out.last_coupling,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

fn worker_count(cfg: &ExperimentConfig) -> usize {
    match cfg.suite.train_threads {
        0 => std::thread::available_parallelism().map_or(1, usize::from),
        n => n,
    }
}

/// Trains the experts of `tasks` (indices into the suite), one task per
/// worker thread. Results come back in the order given.
pub fn train_experts(cfg: &ExperimentConfig, demos: &[Vec<Trajectory>], tasks: &[usize]) -> Result<Vec<ExpertRun>> {
    let workers = worker_count(cfg).clamp(1, tasks.len().max(1));
    let run = |i: usize| {
        let spec = &cfg.suite.tasks[i];
        train_expert(cfg, spec, &demos[i]).map_err(|e| e.in_stage(format!("train-expert task {}", spec.task_id)))
    };
    if workers == 1 {
        return tasks.iter().map(|&i| run(i)).collect();
    }
    let mut results: Vec<Option<Result<ExpertRun>>> = (0..tasks.len()).map(|_| None).collect();
    for chunk in tasks.iter().enumerate().collect::<Vec<_>>().chunks(workers) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk.iter().map(|&(slot, &i)| (slot, scope.spawn(move || run(i)))).collect();
            for (slot, h) in handles {
                results[slot] = Some(h.join().unwrap_or_else(|_| Err(Error::invalid("expert worker panicked"))));
            }
        });
    }
    results.into_iter().map(|r| r.expect("every slot filled")).collect()
}

fn save_expert(cfg: &ExperimentConfig, run: &ExpertRun) -> Result<Vec<PathBuf>> {
    let dir = expert_dir(cfg, run.artifact.task_id);
    run.artifact.save(&dir, &[cfg.provenance()])?;
    let mut files = vec![
        dir.join("actor.ptwt"),
        dir.join("buffer.ptrb"),
        dir.join("manifest.txt"),
        write_text(&dir.join("metrics.csv"), &metrics_text(cfg, &run.metrics)?)?,
    ];
    if cfg.ot_debug_dump {
        if let Some(c) = &run.last_coupling {
            let mut buf = format!("# {}\n", cfg.provenance()).into_bytes();
            c.write_csv(&mut buf)?;
            let path = dir.join("ot_coupling.csv");
            fs::write(&path, buf).at_path(&path)?;
            files.push(path);
        }
    }
    Ok(files)
}

fn suite_index(cfg: &ExperimentConfig, task_id: u32) -> Result<usize> {
    cfg.suite
        .tasks
        .iter()
        .position(|t| t.task_id == task_id)
        .ok_or_else(|| Error::Config(format!("task {task_id} is not in the suite")))
}

/// `train-expert`: every task, or only `only`.
pub fn train_expert_mode(cfg: &ExperimentConfig, only: Option<u32>) -> Result<Vec<PathBuf>> {
    let demos = suite_demos(cfg)?;
    let tasks: Vec<usize> = match only {
        Some(id) => vec![suite_index(cfg, id)?],
        None => (0..cfg.suite.tasks.len()).collect(),
    };
    let runs = train_experts(cfg, &demos, &tasks)?;
    let mut files = Vec::new();
    for run in &runs {
        files.extend(save_expert(cfg, run)?);
    }
    if only.is_none() {
        let mut csv = format!("# {}\ntask_id,success\n", cfg.provenance());
        for run in &runs {
            writeln!(csv, "{},{}", run.artifact.task_id, run.success).expect("string write");
        }
        files.push(write_text(&cfg.out_dir.join("experts").join("summary.csv"), &csv)?);
    }
    Ok(files)
}

/// Expert artifacts for the whole suite: loaded from `<out>/experts` when
/// every task has one, otherwise trained (and saved).
pub fn suite_experts(cfg: &ExperimentConfig) -> Result<Vec<TaskArtifact>> {
    let dirs: Vec<PathBuf> = cfg.suite.tasks.iter().map(|t| expert_dir(cfg, t.task_id)).collect();
    if dirs.iter().all(|d| d.join("manifest.txt").exists()) {
        return dirs
            .iter()
            .map(|d| TaskArtifact::load(d).map_err(|e| e.in_stage(format!("load expert {}", d.display()))))
            .collect();
    }
    let demos = suite_demos(cfg)?;
    let runs = train_experts(cfg, &demos, &(0..cfg.suite.tasks.len()).collect::<Vec<_>>())?;
    for run in &runs {
        save_expert(cfg, run)?;
    }
    Ok(runs.into_iter().map(|r| r.artifact).collect())
}

pub fn success_row(cfg: &ExperimentConfig, policy: &MlpParams, specs: &[TaskSpec]) -> Result<Vec<f64>> {
    specs
        .iter()
        .map(|s| evaluate_policy(policy, s, cfg.suite.eval_episodes, cfg.seed))
        .collect()
}

/// Multi-task distillation of the suite's experts.
pub fn multitask_distill(cfg: &ExperimentConfig, experts: &[TaskArtifact]) -> Result<DistillOutput> {
    behavior_distill(experts, &cfg.distill, cfg.seed)
}

/// GCBC on the pooled demonstrations of every suite task.
pub fn gcbc(cfg: &ExperimentConfig, demos: &[Vec<Trajectory>]) -> Result<MlpParams> {
    let pooled: Vec<Trajectory> = demos.iter().flatten().cloned().collect();
    Ok(gcbc_baseline(&pooled, &cfg.rl, cfg.seed)?.0)
}

pub fn distill_mode(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let experts = suite_experts(cfg)?;
    let demos = suite_demos(cfg)?;
    let out = multitask_distill(cfg, &experts).map_err(|e| e.in_stage("distill"))?;
    let baseline = gcbc(cfg, &demos).map_err(|e| e.in_stage("gcbc"))?;
    let dir = cfg.out_dir.join("distill");
    fs::create_dir_all(&dir).at_path(&dir)?;
    save_weights(&dir.join("policy.ptwt"), &out.policy)?;
    save_weights(&dir.join("gcbc.ptwt"), &baseline)?;
    let specs = &cfg.suite.tasks;
    let mut csv = format!("# {}\npolicy", cfg.provenance());
    for t in specs {
        write!(csv, ",task_{}", t.task_id).expect("string write");
    }
    csv.push_str(",effective_tasks\n");
    let rows = [
        ("distilled", Some(&out.policy)),
        ("gcbc", Some(&baseline)),
        ("experts", None),
    ];
    for (name, policy) in rows {
        let rates = match policy {
            Some(p) => success_row(cfg, p, specs)?,
            None => experts
                .iter()
                .zip(specs)
                .map(|(a, s)| evaluate_policy(&a.expert, s, cfg.suite.eval_episodes, cfg.seed))
                .collect::<Result<_>>()?,
        };
        write!(csv, "{name}").expect("string write");
        for r in &rates {
            write!(csv, ",{r}").expect("string write");
        }
        writeln!(csv, ",{}", rates.iter().sum::<f64>()).expect("string write");
    }
    csv.push_str("# distillation mse per task\n");
    for (id, mse) in &out.per_task_mse {
        writeln!(csv, "# task_{id},{mse}").expect("string write");
    }
    Ok(vec![
        dir.join("policy.ptwt"),
        dir.join("gcbc.ptwt"),
        write_text(&dir.join("summary.csv"), &csv)?,
    ])
}

/// Result of a lifelong run kept in memory.
#[derive(Clone, Debug)]
pub struct LifelongOutcome {
    pub report: BenchmarkReport,
    /// Policy after each stage.
    pub policies: Vec<MlpParams>,
    /// Per-stage RL metrics (empty for offline distillation).
    pub metrics: Vec<Vec<EpisodeMetrics>>,
}

fn new_report(cfg: &ExperimentConfig, strategy: Strategy) -> BenchmarkReport {
    BenchmarkReport::new(
        strategy.name(),
        cfg.seed,
        &cfg.hash(),
        cfg.suite.tasks.iter().map(|t| t.task_id).collect(),
    )
}

/// Offline PolyTask: after learning task `i`, distill a fresh policy over
/// the relabeled artifacts of tasks `0..=i`.
pub fn polytask_offline(cfg: &ExperimentConfig, experts: &[TaskArtifact]) -> Result<LifelongOutcome> {
    let mut report = new_report(cfg, Strategy::PolytaskOffline);
    let mut policies = Vec::new();
    for i in 0..cfg.suite.tasks.len() {
        let started = Instant::now();
        let out = behavior_distill(&experts[..=i], &cfg.distill, cfg.seed)
            .map_err(|e| e.in_stage(format!("polytask-offline stage {i}")))?;
        let rates = success_row(cfg, &out.policy, &cfg.suite.tasks[..=i])?;
        info!("polytask-offline stage {i}: {rates:?}");
        report.push_stage(&rates, started.elapsed().as_secs_f64())?;
        policies.push(out.policy);
    }
    Ok(LifelongOutcome {
        report,
        policies,
        metrics: Vec::new(),
    })
}

/// Online PolyTask: RL on each new task from the current policy with a
/// distillation loss on earlier tasks.
pub fn polytask_online(cfg: &ExperimentConfig, demos: &[Vec<Trajectory>]) -> Result<LifelongOutcome> {
    let mut report = new_report(cfg, Strategy::PolytaskOnline);
    let mut policies: Vec<MlpParams> = Vec::new();
    let mut artifacts: Vec<TaskArtifact> = Vec::new();
    let mut metrics = Vec::new();
    for (i, spec) in cfg.suite.tasks.iter().enumerate() {
        let started = Instant::now();
        let stage = lifelong_online_variant(
            policies.last(),
            &artifacts,
            spec,
            &demos[i],
            &cfg.rl,
            &cfg.distill,
            task_seed(cfg.seed, spec.task_id),
        )
        .map_err(|e| e.in_stage(format!("polytask-online stage {i}")))?;
        let rates = success_row(cfg, &stage.policy, &cfg.suite.tasks[..=i])?;
        info!("polytask-online stage {i}: {rates:?}");
        report.push_stage(&rates, started.elapsed().as_secs_f64())?;
        metrics.push(stage.training.map(|t| t.metrics).unwrap_or_default());
        artifacts.push(stage.artifact);
        policies.push(stage.policy);
    }
    Ok(LifelongOutcome {
        report,
        policies,
        metrics,
    })
}

pub fn finetune(cfg: &ExperimentConfig, demos: &[Vec<Trajectory>]) -> Result<LifelongOutcome> {
    let started = Instant::now();
    let tasks: Vec<(TaskSpec, Vec<Trajectory>)> = cfg.suite.tasks.iter().cloned().zip(demos.iter().cloned()).collect();
    let out = finetune_baseline(&tasks, &cfg.rl, cfg.suite.eval_episodes, cfg.seed)
        .map_err(|e| e.in_stage("finetune"))?;
    let mut report = new_report(cfg, Strategy::Finetune);
    let per_stage = started.elapsed().as_secs_f64() / tasks.len() as f64;
    for row in &out.grid {
        report.push_stage(row, per_stage)?;
    }
    Ok(LifelongOutcome {
        report,
        policies: out.policies,
        metrics: out.trainings.into_iter().map(|t| t.metrics).collect(),
    })
}

pub fn run_lifelong(cfg: &ExperimentConfig, strategy: Strategy) -> Result<LifelongOutcome> {
    match strategy {
        Strategy::PolytaskOffline => polytask_offline(cfg, &suite_experts(cfg)?),
        Strategy::PolytaskOnline => polytask_online(cfg, &suite_demos(cfg)?),
        Strategy::Finetune => finetune(cfg, &suite_demos(cfg)?),
    }
}

pub fn lifelong_mode(cfg: &ExperimentConfig, strategy: Strategy) -> Result<(BenchmarkReport, Vec<PathBuf>)> {
    let outcome = run_lifelong(cfg, strategy)?;
    let dir = lifelong_dir(cfg, strategy);
    let mut files = emit_report(&outcome.report, &dir)?;
    for (i, p) in outcome.policies.iter().enumerate() {
        let path = dir.join(format!("stage_{i}.ptwt"));
        save_weights(&path, p)?;
        files.push(path);
    }
    for (i, m) in outcome.metrics.iter().enumerate() {
        files.push(write_text(&dir.join(format!("metrics_stage_{i}.csv")), &metrics_text(cfg, m)?)?);
    }
    Ok((outcome.report, files))
}

/// `eval`: success of every stored policy on every suite task.
pub fn eval_mode(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let specs = &cfg.suite.tasks;
    let mut candidates: Vec<(String, PathBuf)> = specs
        .iter()
        .map(|t| (format!("expert_{}", t.task_id), expert_dir(cfg, t.task_id).join("actor.ptwt")))
        .collect();
    candidates.push(("distilled".into(), cfg.out_dir.join("distill").join("policy.ptwt")));
    candidates.push(("gcbc".into(), cfg.out_dir.join("distill").join("gcbc.ptwt")));
    for s in [Strategy::PolytaskOffline, Strategy::PolytaskOnline, Strategy::Finetune] {
        let last = specs.len().saturating_sub(1);
        candidates.push((s.name().into(), lifelong_dir(cfg, s).join(format!("stage_{last}.ptwt"))));
    }
    let mut csv = format!("# {}\npolicy", cfg.provenance());
    for t in specs {
        write!(csv, ",task_{}", t.task_id).expect("string write");
    }
    csv.push_str(",effective_tasks\n");
    let mut found = 0;
    for (name, path) in candidates.into_iter().filter(|(_, p)| p.exists()) {
        let policy = load_weights(&path)?;
        let rates = success_row(cfg, &policy, specs).map_err(|e| e.in_stage(format!("eval {name}")))?;
        write!(csv, "{name}").expect("string write");
        for r in &rates {
            write!(csv, ",{r}").expect("string write");
        }
        writeln!(csv, ",{}", rates.iter().sum::<f64>()).expect("string write");
        found += 1;
    }
    if found == 0 {
        return Err(Error::Config(format!(
            "no trained policies under {}; run train-expert, distill or lifelong first",
            cfg.out_dir.display()
        )));
    }
    Ok(vec![write_text(&cfg.out_dir.join("eval.csv"), &csv)?])
}

/// `report`: re-emits every lifelong report found under the output
/// directory and writes a strategy comparison table.
pub fn report_mode(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut csv = format!("# {}\nstrategy,final_effective_tasks,first_task_final_success\n", cfg.provenance());
    let first = cfg.suite.tasks[0].task_id;
    for s in [Strategy::PolytaskOffline, Strategy::PolytaskOnline, Strategy::Finetune] {
        let dir = lifelong_dir(cfg, s);
        let path = dir.join("report.json");
        if !path.exists() {
            continue;
        }
        let report = load_report(&path)?;
        files.extend(emit_report(&report, &dir)?);
        let first_success = report.final_success(first).map_or(String::new(), |v| v.to_string());
        writeln!(csv, "{},{},{first_success}", s.name(), report.final_effective_tasks()).expect("string write");
    }
    if files.is_empty() {
        return Err(Error::Config(format!(
            "no lifelong reports under {}; run the lifelong mode first",
            cfg.out_dir.display()
        )));
    }
    files.push(write_text(&cfg.out_dir.join("lifelong").join("comparison.csv"), &csv)?);
    Ok(files)
}

/// Runs `cfg.mode`. `only_task` restricts `train-expert` to one task.
pub fn run_pipeline(cfg: &ExperimentConfig, only_task: Option<u32>) -> Result<RunSummary> {
    cfg.validate()?;
    info!("mode {:?}, {}", cfg.mode, cfg.provenance());
    let (report, files) = match cfg.mode {
        Mode::GenDemos => (None, gen_demos(cfg)?),
        Mode::TrainExpert => (None, train_expert_mode(cfg, only_task)?),
        Mode::Distill => (None, distill_mode(cfg)?),
        Mode::Lifelong => {
            let (r, f) = lifelong_mode(cfg, cfg.strategy)?;
            (Some(r), f)
        }
        Mode::Eval => (None, eval_mode(cfg)?),
        Mode::Report => (None, report_mode(cfg)?),
    };
    Ok(RunSummary {
        mode: cfg.mode,
        report,
        files,
    })
}

//! Distillation of task experts into one goal-conditioned policy, the two
//! lifelong variants, and the finetuning and GCBC baselines.

use rand::Rng;

use super::artifact::TaskArtifact;
use super::config::DistillConfig;
use crate::demo_rl::{
    bc_pretrain, init_actor, regression_gradient, regression_mse, train_agent, AuxiliarySource, RegressionBatch,
    RlConfig, TrainOutput,
};
use crate::envsuite::{evaluate_policy, TaskSpec, Trajectory};
use crate::error::{Error, Result};
use crate::numkit::{AdamConfig, AdamState, MlpParams};
use crate::rng::{indexed_stream, stream, task_seed};

#[derive(Clone, Debug, PartialEq)]
pub struct DistillOutput {
    pub policy: MlpParams,
    /// `(task_id, mean ||Pi(s) - pi_k(s)||^2)` over each task's whole slice,
    /// in task-id order.
    pub per_task_mse: Vec<(u32, f64)>,
}

/// One task's distillation data: buffer states and the teacher's actions
/// on them.
#[derive(Clone, Debug)]
pub struct TeacherData {
    pub task_id: u32,
    pub data: RegressionBatch,
}

impl TeacherData {
    pub fn from_artifact(a: &TaskArtifact) -> Result<Self> {
        let states = a.buffer.state_matrix();
        let targets = a.expert.predict_batch(states.view())?;
        Ok(Self {
            task_id: a.task_id,
            data: RegressionBatch { states, targets },
        })
    }
}

/// Teacher data sorted by task id (stable for equal ids), so the sampling
/// below does not depend on the order artifacts were supplied in.
pub fn teacher_data(artifacts: &[TaskArtifact]) -> Result<Vec<TeacherData>> {
    if artifacts.is_empty() {
        return Err(Error::invalid("distillation needs at least one task"));
    }
    let first = &artifacts[0].expert;
    for a in artifacts {
        if a.expert.input_dim() != first.input_dim() || a.expert.output_dim() != first.output_dim() {
            return Err(Error::shape("task experts disagree on input/output dimensions"));
        }
        if a.buffer.is_empty() {
            return Err(Error::invalid(format!("task {} has an empty buffer", a.task_id)));
        }
    }
    let mut sorted: Vec<&TaskArtifact> = artifacts.iter().collect();
    sorted.sort_by_key(|a| a.task_id);
    sorted.into_iter().map(TeacherData::from_artifact).collect()
}

/// Draws the `step`-th distillation minibatch: a uniformly chosen task,
/// then `batch` rows with replacement. Depends only on `(seed, step)`.
pub fn distill_batch(tasks: &[TeacherData], batch: usize, seed: u64, label: &str, step: u64) -> RegressionBatch {
    let mut rng = indexed_stream(seed, label, step);
    let k = rng.random_range(0..tasks.len());
    let n = tasks[k].data.len();
    let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
    tasks[k].data.select(&idx)
}

/// Task index chosen at `step`; exposed for sampling-uniformity checks.
pub fn sampled_task(task_count: usize, seed: u64, step: u64) -> usize {
    indexed_stream(seed, DISTILL_LABEL, step).random_range(0..task_count)
}

const DISTILL_LABEL: &str = "distill-step";

/// Fresh student with the teachers' architecture unless overridden.
pub fn init_student(teacher: &MlpParams, config: &DistillConfig, seed: u64) -> Result<MlpParams> {
    let layers = teacher.layers();
    let hidden_dim = config.hidden_dim.unwrap_or(layers[0].out_dim());
    let hidden_layers = config.hidden_layers.unwrap_or(layers.len() - 1);
    init_actor(
        teacher.input_dim(),
        teacher.output_dim(),
        hidden_dim,
        hidden_layers,
        &mut stream(seed, "distill-init"),
    )
}

fn per_task_mse(policy: &MlpParams, tasks: &[TeacherData]) -> Result<Vec<(u32, f64)>> {
    tasks
        .iter()
        .map(|t| Ok((t.task_id, regression_mse(policy, &t.data)?)))
        .collect()
}

/// Trains a freshly initialised policy to imitate every task's expert on
/// that task's buffer states, sampling one task uniformly per step.
pub fn behavior_distill(artifacts: &[TaskArtifact], config: &DistillConfig, seed: u64) -> Result<DistillOutput> {
    config.validate()?;
    let tasks = teacher_data(artifacts)?;
    let mut policy = init_student(&artifacts[0].expert, config, seed)?;
    let mut opt = AdamState::new(&policy, AdamConfig::with_lr(config.lr));
    for step in 0..config.grad_steps as u64 {
        let batch = distill_batch(&tasks, config.batch_size, seed, DISTILL_LABEL, step);
        let (_, grads) = regression_gradient(&policy, &batch, 1.0)?;
        opt.step(&mut policy, &grads)?;
    }
    let per_task_mse = per_task_mse(&policy, &tasks)?;
    Ok(DistillOutput { policy, per_task_mse })
}

/// Offline lifelong step: distill a fresh policy over every relabeled
/// artifact so far. Earlier unified policies play no part.
pub fn lifelong_distill_offline(
    previous: &[TaskArtifact],
    new: &TaskArtifact,
    config: &DistillConfig,
    seed: u64,
) -> Result<DistillOutput> {
    let mut all = previous.to_vec();
    all.push(new.clone());
    if let Some(a) = all.iter().find(|a| !a.relabeled) {
        return Err(Error::invalid(format!("task {} has not been relabeled", a.task_id)));
    }
    behavior_distill(&all, config, seed)
}

/// Distillation targets mixed into RL actor updates.
struct DistillAux {
    tasks: Vec<TeacherData>,
    batch: usize,
    seed: u64,
    weight: f64,
}

impl AuxiliarySource for DistillAux {
    fn sample(&self, update: u64) -> Result<Option<RegressionBatch>> {
        Ok(Some(distill_batch(&self.tasks, self.batch, self.seed, "online-distill", update)))
    }

    fn weight(&self) -> f64 {
        self.weight
    }
}

#[derive(Clone, Debug)]
pub struct OnlineStage {
    pub policy: MlpParams,
    /// The new task's buffer slice, relabeled with `policy`.
    pub artifact: TaskArtifact,
    /// `None` when the RL budget was zero.
    pub training: Option<TrainOutput>,
}

/// Online lifelong step: RL on the new task starting from the current
/// policy, with a distillation loss on earlier tasks' buffers added to every
/// actor update. The new task's buffer is then relabeled with the result.
///
/// With a zero RL budget and earlier tasks present there is no new data,
/// and the step is plain distillation over the earlier tasks.
#[allow(clippy::too_many_arguments)]
pub fn lifelong_online_variant(
    current: Option<&MlpParams>,
    previous: &[TaskArtifact],
    spec: &TaskSpec,
    demos: &[Trajectory],
    rl: &RlConfig,
    distill: &DistillConfig,
    seed: u64,
) -> Result<OnlineStage> {
    distill.validate()?;
    if rl.total_steps == 0 && !previous.is_empty() {
        let out = behavior_distill(previous, distill, seed)?;
        let empty = crate::demo_rl::ReplayBuffer::new(
            distill.buffer_size,
            previous[0].buffer.dims().0,
            previous[0].buffer.dims().1,
            previous[0].buffer.dims().2,
        )?;
        let artifact = TaskArtifact {
            task_id: spec.task_id,
            expert: out.policy.clone(),
            buffer: empty,
            relabeled: true,
            seed,
        };
        return Ok(OnlineStage {
            policy: out.policy,
            artifact,
            training: None,
        });
    }
    let aux = if previous.is_empty() {
        None
    } else {
        Some(DistillAux {
            tasks: teacher_data(previous)?,
            batch: distill.batch_size,
            seed,
            weight: distill.online_distill_weight,
        })
    };
    let out = train_agent(
        spec,
        demos,
        rl,
        seed,
        current.cloned(),
        aux.as_ref().map(|a| a as &dyn AuxiliarySource),
    )?;
    let policy = out.bundle.actor.clone();
    let artifact = TaskArtifact::new(spec.task_id, policy.clone(), &out.buffer, distill.buffer_size, seed)?.relabeled()?;
    Ok(OnlineStage {
        policy,
        artifact,
        training: Some(out),
    })
}

/// Success of every seen task after every stage: row `i` has `i + 1`
/// entries.
pub type StageGrid = Vec<Vec<f64>>;

#[derive(Clone, Debug)]
pub struct FinetuneOutput {
    /// The policy after each stage.
    pub policies: Vec<MlpParams>,
    pub grid: StageGrid,
    pub trainings: Vec<TrainOutput>,
}

/// One policy trained through the task sequence with the demo-guided RL
/// objective, evaluated on all seen tasks after each stage. Stage `k` uses
/// the same per-task seed as a standalone expert run for that task.
pub fn finetune_baseline(
    tasks: &[(TaskSpec, Vec<Trajectory>)],
    rl: &RlConfig,
    eval_episodes: usize,
    seed: u64,
) -> Result<FinetuneOutput> {
    if tasks.is_empty() {
        return Err(Error::invalid("finetuning needs at least one task"));
    }
    let mut policies = Vec::new();
    let mut grid = Vec::new();
    let mut trainings = Vec::new();
    let mut current: Option<MlpParams> = None;
    for (i, (spec, demos)) in tasks.iter().enumerate() {
        let out = train_agent(spec, demos, rl, task_seed(seed, spec.task_id), current.take(), None)?;
        let actor = out.bundle.actor.clone();
        let row = tasks[..=i]
            .iter()
            .map(|(s, _)| evaluate_policy(&actor, s, eval_episodes, seed))
            .collect::<Result<Vec<_>>>()?;
        grid.push(row);
        policies.push(actor.clone());
        trainings.push(out);
        current = Some(actor);
    }
    Ok(FinetuneOutput {
        policies,
        grid,
        trainings,
    })
}

/// Goal-conditioned BC: one policy regressed on the pooled demonstrations
/// of every task, with the same procedure and budget as expert pretraining.
pub fn gcbc_baseline(demos: &[Trajectory], rl: &RlConfig, seed: u64) -> Result<(MlpParams, f64)> {
    let first = demos
        .iter()
        .find(|d| !d.is_empty())
        .ok_or_else(|| Error::invalid("GCBC needs at least one demonstration"))?;
    let state_dim = first.observations[0].len() + first.goal.len();
    let actor = init_actor(
        state_dim,
        first.actions[0].len(),
        rl.hidden_dim,
        rl.hidden_layers,
        &mut stream(seed, "gcbc-init"),
    )?;
    bc_pretrain(demos, actor, rl.bc_epochs, rl.bc_lr, rl.batch_size, &mut stream(seed, "gcbc"))
}

/// Per-stage success grid for a sequence of unified policies.
pub fn evaluate_stages(policies: &[MlpParams], specs: &[TaskSpec], episodes: usize, seed: u64) -> Result<StageGrid> {
    if policies.len() > specs.len() {
        return Err(Error::invalid("more stages than tasks"));
    }
    policies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            specs[..=i]
                .iter()
                .map(|s| evaluate_policy(p, s, episodes, seed))
                .collect()
        })
        .collect()
}

//! The demonstration-guided RL loop: BC pretraining, then acting, storing
//! whole episodes, and n-step actor-critic updates.

use std::io::Write;

use rand::seq::index::sample;

use super::agent::{bc_pretrain, exploration_action, init_actor, AgentBundle, RegressionBatch};
use super::buffer::{ReplayBuffer, Transition};
use super::config::{RewardMode, RlConfig};
use crate::envsuite::{reset, step, TaskSpec, Trajectory, ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::numkit::MlpParams;
use crate::ot_reward::{assign_episode_rewards, CouplingMatrix, FeaturePreprocessor};
use crate::rng::stream;

/// Extra supervised targets mixed into every actor update (used to keep
/// earlier tasks alive while learning a new one).
pub trait AuxiliarySource {
    /// Batch for the `update`-th agent update, or `None` to skip.
    fn sample(&self, update: u64) -> Result<Option<RegressionBatch>>;
    fn weight(&self) -> f64;
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics {
    /// Environment step at which the episode ended.
    pub step: u64,
    pub episode: u64,
    pub task_id: u32,
    /// Sum of the rewards stored for training (OT rewards in OT mode).
    pub episode_return: f64,
    pub success: bool,
    pub actor_q_term: f64,
    pub actor_bc_term: f64,
    pub critic1_loss: f64,
    pub critic2_loss: f64,
}

pub const METRICS_HEADER: &str =
    "step,episode,task_id,episode_return,success,actor_q_term,actor_bc_term,critic1_loss,critic2_loss";

/// Writes the metrics stream as CSV (header plus one row per episode).
pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[EpisodeMetrics]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for m in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            m.step,
            m.episode,
            m.task_id,
            m.episode_return,
            u8::from(m.success),
            m.actor_q_term,
            m.actor_bc_term,
            m.critic1_loss,
            m.critic2_loss
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub bundle: AgentBundle,
    pub buffer: ReplayBuffer,
    pub metrics: Vec<EpisodeMetrics>,
    /// The actor right after BC pretraining.
    pub bc_actor: MlpParams,
    pub bc_mse: f64,
    pub preprocessor: Option<FeaturePreprocessor>,
    /// Coupling of the last OT-scored episode.
    pub last_coupling: Option<CouplingMatrix>,
}

/// Expected number of agent updates after `env_steps` steps.
pub fn expected_updates(env_steps: u64, seed_frames: u64, update_every: u64) -> u64 {
    env_steps.saturating_sub(seed_frames) / update_every
}

/// Single-task demonstration-guided RL from a fresh actor.
pub fn run_demo_guided_rl(spec: &TaskSpec, demos: &[Trajectory], config: &RlConfig, seed: u64) -> Result<TrainOutput> {
    train_agent(spec, demos, config, seed, None, None)
}

/// The actor a run with this seed starts from when none is supplied.
pub fn fresh_actor(spec: &TaskSpec, config: &RlConfig, seed: u64) -> Result<MlpParams> {
    init_actor(
        OBS_DIM + spec.goal_dim(),
        ACT_DIM,
        config.hidden_dim,
        config.hidden_layers,
        &mut stream(seed, "actor-init"),
    )
}

#[derive(Default)]
struct EpisodeLossAcc {
    n: u64,
    q: f64,
    bc: f64,
    c1: f64,
    c2: f64,
}

/// General form: optional starting actor (finetuning) and optional
/// auxiliary regression targets.
pub fn train_agent(
    spec: &TaskSpec,
    demos: &[Trajectory],
    config: &RlConfig,
    seed: u64,
    init: Option<MlpParams>,
    aux: Option<&dyn AuxiliarySource>,
) -> Result<TrainOutput> {
    config.validate()?;
    spec.validate()?;
    let goal = spec.encoded_goal();
    let state_dim = OBS_DIM + goal.len();
    if demos.iter().any(|d| d.goal.len() != goal.len() || !d.is_consistent()) {
        return Err(Error::shape("demonstrations do not match the task's goal encoding"));
    }
    let have_demos = demos.iter().any(|d| !d.is_empty());
    if config.reward_mode == RewardMode::OptimalTransport && !have_demos {
        return Err(Error::invalid("optimal-transport rewards need demonstrations"));
    }
    if (config.lambda > 0.0 || config.bc_epochs > 0) && !have_demos {
        return Err(Error::invalid("BC pretraining / regularization needs demonstrations"));
    }
    let first_update = config.seed_frames + config.update_every;
    if config.total_steps >= first_update && first_update < spec.max_episode_steps as usize {
        return Err(Error::Config(format!(
            "seed_frames + update_every ({first_update}) must cover one full episode ({}) so the first update has data",
            spec.max_episode_steps
        )));
    }

    let actor = match init {
        Some(a) => a,
        None => fresh_actor(spec, config, seed)?,
    };
    if actor.input_dim() != state_dim || actor.output_dim() != ACT_DIM {
        return Err(Error::shape("initial actor does not match the task dimensions"));
    }
    let (actor, bc_mse) = if config.bc_epochs > 0 {
        bc_pretrain(demos, actor, config.bc_epochs, config.bc_lr, config.batch_size, &mut stream(seed, "bc"))?
    } else {
        (actor, f64::NAN)
    };
    let bc_actor = actor.clone();
    let mut bundle = AgentBundle::new(
        actor,
        config.hidden_dim,
        config.hidden_layers,
        config.lr,
        &mut stream(seed, "critic-init"),
    )?;
    let demo_data = if have_demos {
        Some(RegressionBatch::from_demos(demos)?)
    } else {
        None
    };
    let mut preprocessor = match config.reward_mode {
        RewardMode::OptimalTransport => Some(FeaturePreprocessor::new(&bundle.actor, config.ot.target_update_period)?),
        RewardMode::Environment => None,
    };

    let mut buffer = ReplayBuffer::new(config.buffer_capacity, OBS_DIM, ACT_DIM, goal.len())?;
    let mut env_rng = stream(seed, "env");
    let mut explore_rng = stream(seed, "explore");
    let mut replay_rng = stream(seed, "replay");
    let mut demo_rng = stream(seed, "demo-batch");
    let mut metrics = Vec::new();
    let mut last_coupling = None;

    let (mut state, mut obs) = reset(spec, &mut env_rng);
    let mut episode: Vec<Transition> = Vec::new();
    let mut acc = EpisodeLossAcc::default();
    let mut episode_count = 0u64;

    for t in 1..=config.total_steps as u64 {
        let mut s = obs.clone();
        s.extend_from_slice(&goal);
        let action = exploration_action(
            &bundle.actor,
            &s,
            config.exploration_std,
            t - 1,
            config.exploration_steps as u64,
            &mut explore_rng,
        )?;
        let out = step(spec, &mut state, &action)?;
        episode.push(Transition {
            observation: obs,
            action,
            reward: out.reward,
            next_observation: out.observation.clone(),
            done: out.done && out.success,
            goal: goal.clone(),
            episode: 0,
            step: 0,
        });
        obs = out.observation;
        bundle.env_steps = t;

        if out.done {
            let mut finished = std::mem::take(&mut episode);
            if let Some(pp) = &preprocessor {
                let assigned = assign_episode_rewards(finished, demos, pp, &config.ot)?;
                finished = assigned.episode;
                last_coupling = Some(assigned.coupling);
            }
            let episode_return = finished.iter().map(|tr| tr.reward).sum();
            buffer.add_episode(finished)?;
            let mean = |v: f64| if acc.n == 0 { 0.0 } else { v / acc.n as f64 };
            metrics.push(EpisodeMetrics {
                step: t,
                episode: episode_count,
                task_id: spec.task_id,
                episode_return,
                success: out.success,
                actor_q_term: mean(acc.q),
                actor_bc_term: mean(acc.bc),
                critic1_loss: mean(acc.c1),
                critic2_loss: mean(acc.c2),
            });
            episode_count += 1;
            acc = EpisodeLossAcc::default();
            (state, obs) = reset(spec, &mut env_rng);
        }

        if t > config.seed_frames as u64 && (t - config.seed_frames as u64) % config.update_every as u64 == 0 {
            let batch = buffer.sample_nstep(config.batch_size, config.n_step, config.gamma, &mut replay_rng)?;
            let (c1, c2) = bundle.critic_update(&batch, config.tau)?;
            let demo_batch = match &demo_data {
                Some(d) if config.lambda > 0.0 && d.len() > config.batch_size => {
                    let idx = sample(&mut demo_rng, d.len(), config.batch_size).into_vec();
                    Some(d.select(&idx))
                }
                Some(d) if config.lambda > 0.0 => Some(d.clone()),
                _ => None,
            };
            let aux_batch = match aux {
                Some(src) => src.sample(bundle.updates)?.map(|b| (b, src.weight())),
                None => None,
            };
            let loss = bundle.actor_update(
                batch.states.view(),
                demo_batch.as_ref(),
                config.alpha,
                config.lambda,
                config.actor_min_q,
                aux_batch.as_ref().map(|(b, w)| (b, *w)),
            )?;
            bundle.updates += 1;
            acc.n += 1;
            acc.q += loss.q_term;
            acc.bc += loss.bc_term;
            acc.c1 += c1;
            acc.c2 += c2;
        }

        if let Some(pp) = preprocessor.as_mut() {
            pp.maybe_update_target(&bundle.actor, t);
        }
    }

    Ok(TrainOutput {
        bundle,
        buffer,
        metrics,
        bc_actor,
        bc_mse,
        preprocessor,
        last_coupling,
    })
}

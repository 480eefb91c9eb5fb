use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::env::{reset, step, TaskSpec, ACT_DIM, OBS_DIM};
use crate::binio::{check_len, read_f32s, read_magic, read_u32, read_u8, write_f32s, write_u32};
use crate::error::{Error, PathContext, Result};
use crate::numkit::MlpParams;
use crate::rng::indexed_stream;

/// Proportional gain of the scripted controller.
pub const EXPERT_KP: f64 = 2.0;
const MAX_CONSECUTIVE_FAILURES: usize = 1000;

/// Anything that maps (observation, encoded goal) to an action.
pub trait Policy {
    fn act(&self, observation: &[f64], goal: &[f64]) -> Result<Vec<f64>>;
}

impl Policy for MlpParams {
    fn act(&self, observation: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        let mut input = Vec::with_capacity(observation.len() + goal.len());
        input.extend_from_slice(observation);
        input.extend_from_slice(goal);
        self.apply(&input)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(&self, observation: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        (**self).act(observation, goal)
    }
}

/// Noise-free scripted controller for one task, usable as a [`Policy`].
#[derive(Clone, Debug)]
pub struct ScriptedExpert {
    pub spec: TaskSpec,
}

impl Policy for ScriptedExpert {
    fn act(&self, observation: &[f64], _goal: &[f64]) -> Result<Vec<f64>> {
        Ok(expert_action(&self.spec, observation))
    }
}

/// Always emits the same action.
#[derive(Clone, Debug)]
pub struct ConstantPolicy(pub Vec<f64>);

impl Policy for ConstantPolicy {
    fn act(&self, _observation: &[f64], _goal: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

/// Noise-free controller output `clip(kp * (goal - position) / gain)`.
pub fn expert_action(spec: &TaskSpec, observation: &[f64]) -> Vec<f64> {
    (0..ACT_DIM)
        .map(|i| (EXPERT_KP * (spec.goal[i] - observation[i]) / spec.dynamics_gain).clamp(-1.0, 1.0))
        .collect()
}

/// [`expert_action`] plus Gaussian noise, clipped again to the action box.
pub fn scripted_expert<R: Rng + ?Sized>(
    spec: &TaskSpec,
    observation: &[f64],
    noise_scale: f64,
    rng: &mut R,
) -> Vec<f64> {
    expert_action(spec, observation)
        .into_iter()
        .map(|base| {
            let noise = if noise_scale > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                noise_scale * z
            } else {
                0.0
            };
            (base + noise).clamp(-1.0, 1.0)
        })
        .collect()
}

/// One episode: `observations.len() == actions.len() + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub goal: Vec<f64>,
    pub success: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        self.observations.len() == self.actions.len() + 1 && self.rewards.len() == self.actions.len()
    }
}

fn run_episode<R: Rng + ?Sized>(
    spec: &TaskSpec,
    rng: &mut R,
    mut choose: impl FnMut(&[f64], &mut R) -> Result<Vec<f64>>,
) -> Result<Trajectory> {
    let goal = spec.encoded_goal();
    let (mut state, obs) = reset(spec, rng);
    let mut traj = Trajectory {
        observations: vec![obs],
        actions: Vec::new(),
        rewards: Vec::new(),
        goal,
        success: false,
    };
    loop {
        let obs = traj.observations.last().expect("non-empty");
        let action = choose(obs, rng)?;
        let out = step(spec, &mut state, &action)?;
        traj.actions.push(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect());
        traj.rewards.push(out.reward);
        traj.observations.push(out.observation);
        if out.done {
            traj.success = out.success;
            return Ok(traj);
        }
    }
}

/// Greedy rollout of `policy` from a reset drawn with `rng`.
pub fn rollout<P: Policy + ?Sized, R: Rng + ?Sized>(policy: &P, spec: &TaskSpec, rng: &mut R) -> Result<Trajectory> {
    let goal = spec.encoded_goal();
    run_episode(spec, rng, |obs, _| policy.act(obs, &goal))
}

/// Exactly `count` successful noisy expert trajectories; failed rollouts are
/// discarded and resampled.
pub fn collect_demonstrations(spec: &TaskSpec, count: usize, noise_scale: f64, seed: u64) -> Result<Vec<Trajectory>> {
    if count == 0 {
        return Err(Error::invalid("demonstration count must be at least 1"));
    }
    spec.validate()?;
    let mut rng = indexed_stream(seed, "demos", u64::from(spec.task_id));
    let mut demos = Vec::with_capacity(count);
    let mut failures = 0;
    while demos.len() < count {
        let traj = run_episode(spec, &mut rng, |obs, rng| Ok(scripted_expert(spec, obs, noise_scale, rng)))?;
        if traj.success {
            demos.push(traj);
            failures = 0;
        } else {
            failures += 1;
            if failures > MAX_CONSECUTIVE_FAILURES {
                return Err(Error::DemoCollection {
                    task_id: spec.task_id,
                    attempts: failures,
                });
            }
        }
    }
    Ok(demos)
}

/// Fraction of `episodes` greedy rollouts that reach the goal. Start states
/// depend only on `(seed, task_id)`, so different policies face the same
/// starts.
pub fn evaluate_policy<P: Policy + ?Sized>(policy: &P, spec: &TaskSpec, episodes: usize, seed: u64) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::invalid("evaluation needs at least one episode"));
    }
    let mut rng = indexed_stream(seed, "eval", u64::from(spec.task_id));
    let mut successes = 0usize;
    for _ in 0..episodes {
        if rollout(policy, spec, &mut rng)?.success {
            successes += 1;
        }
    }
    Ok(successes as f64 / episodes as f64)
}

/// Sum of per-task success rates.
pub fn effective_tasks(success_rates: &[f64]) -> Result<f64> {
    for &r in success_rates {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Range {
                name: "success rate",
                detail: format!("{r} not in [0, 1]"),
            });
        }
    }
    Ok(success_rates.iter().sum())
}

pub const DEMO_MAGIC: &[u8; 4] = b"PTDM";
pub const DEMO_VERSION: u32 = 1;
const DEMO_WHAT: &str = "demonstration file";
const MAX_DIM: u32 = 1 << 16;
const MAX_LEN: u32 = 1 << 24;

/// `PTDM` layout: header (obs, act, goal dims, count), then per trajectory
/// `T`, goal, `T+1` observations, `T` actions, `T` rewards (f32), success u8.
pub fn write_demonstrations<W: Write>(mut w: W, demos: &[Trajectory]) -> Result<()> {
    let goal_dim = demos.first().map_or(0, |d| d.goal.len());
    w.write_all(DEMO_MAGIC)?;
    write_u32(&mut w, DEMO_VERSION)?;
    write_u32(&mut w, OBS_DIM as u32)?;
    write_u32(&mut w, ACT_DIM as u32)?;
    write_u32(&mut w, goal_dim as u32)?;
    write_u32(&mut w, demos.len() as u32)?;
    for d in demos {
        if !d.is_consistent() || d.goal.len() != goal_dim {
            return Err(Error::shape("trajectory lengths or goal dims are inconsistent"));
        }
        write_u32(&mut w, d.len() as u32)?;
        write_f32s(&mut w, d.goal.iter().copied())?;
        for o in &d.observations {
            if o.len() != OBS_DIM {
                return Err(Error::shape("observation dim"));
            }
            write_f32s(&mut w, o.iter().copied())?;
        }
        for a in &d.actions {
            if a.len() != ACT_DIM {
                return Err(Error::shape("action dim"));
            }
            write_f32s(&mut w, a.iter().copied())?;
        }
        write_f32s(&mut w, d.rewards.iter().copied())?;
        w.write_all(&[u8::from(d.success)])?;
    }
    Ok(())
}

pub fn read_demonstrations<R: Read>(mut r: R) -> Result<Vec<Trajectory>> {
    read_magic(&mut r, DEMO_MAGIC, DEMO_WHAT)?;
    let version = read_u32(&mut r)?;
    if version != DEMO_VERSION {
        return Err(Error::Format {
            what: DEMO_WHAT,
            detail: format!("unsupported version {version}"),
        });
    }
    let obs_dim = check_len(read_u32(&mut r)?, MAX_DIM, DEMO_WHAT, "obs_dim")?;
    let act_dim = check_len(read_u32(&mut r)?, MAX_DIM, DEMO_WHAT, "act_dim")?;
    let goal_dim = check_len(read_u32(&mut r)?, MAX_DIM, DEMO_WHAT, "goal_dim")?;
    let n = check_len(read_u32(&mut r)?, MAX_LEN, DEMO_WHAT, "n_trajectories")?;
    let mut out = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let t = check_len(read_u32(&mut r)?, MAX_LEN, DEMO_WHAT, "trajectory length")?;
        let goal = read_f32s(&mut r, goal_dim)?;
        let observations = (0..=t).map(|_| read_f32s(&mut r, obs_dim)).collect::<Result<Vec<_>>>()?;
        let actions = (0..t).map(|_| read_f32s(&mut r, act_dim)).collect::<Result<Vec<_>>>()?;
        let rewards = read_f32s(&mut r, t)?;
        let success = match read_u8(&mut r)? {
            0 => false,
            1 => true,
            other => {
                return Err(Error::Format {
                    what: DEMO_WHAT,
                    detail: format!("success flag {other}"),
                })
            }
        };
        out.push(Trajectory {
            observations,
            actions,
            rewards,
            goal,
            success,
        });
    }
    Ok(out)
}

pub fn save_demonstrations(path: &Path, demos: &[Trajectory]) -> Result<()> {
    let f = std::fs::File::create(path).at_path(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_demonstrations(&mut w, demos)?;
    w.flush().at_path(path)
}

pub fn load_demonstrations(path: &Path) -> Result<Vec<Trajectory>> {
    let f = std::fs::File::open(path).at_path(path)?;
    read_demonstrations(std::io::BufReader::new(f))
}

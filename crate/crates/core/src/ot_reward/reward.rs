use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::sinkhorn::{sinkhorn, CouplingMatrix, SinkhornParams};
use crate::demo_rl::Transition;
use crate::envsuite::Trajectory;
use crate::error::{Error, Result};
use crate::numkit::{Layer, MlpParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtConfig {
    pub eps: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Multiplier applied to every per-step reward.
    pub scale: f64,
    /// Environment steps between target-preprocessor refreshes.
    pub target_update_period: u64,
}

impl Default for OtConfig {
    fn default() -> Self {
        Self {
            eps: 0.05,
            max_iters: 500,
            tol: 1e-6,
            scale: 10.0,
            target_update_period: 20_000,
        }
    }
}

impl OtConfig {
    pub fn sinkhorn_params(&self) -> SinkhornParams {
        SinkhornParams {
            eps: self.eps,
            max_iters: self.max_iters,
            tol: self.tol,
            log_domain_fallback: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::Config("ot.eps must be positive".into()));
        }
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(Error::Config("ot.max_iters and ot.tol must be positive".into()));
        }
        if !(self.scale > 0.0) {
            return Err(Error::Config("ot.scale must be positive".into()));
        }
        if self.target_update_period == 0 {
            return Err(Error::Config("ot.target_update_period must be positive".into()));
        }
        Ok(())
    }
}

/// `C_ij = 1 - cos(b_i, e_j)`, clamped to `[0, 2]`. A zero row on either
/// side costs 1.
pub fn cosine_cost_matrix(behavior: ArrayView2<f64>, expert: ArrayView2<f64>) -> Result<Array2<f64>> {
    if behavior.ncols() != expert.ncols() {
        return Err(Error::shape(format!(
            "feature dims differ: behavior {} vs expert {}",
            behavior.ncols(),
            expert.ncols()
        )));
    }
    let norms = |m: ArrayView2<f64>| m.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect::<Vec<_>>();
    let nb = norms(behavior);
    let ne = norms(expert);
    let dots = behavior.dot(&expert.t());
    Ok(Array2::from_shape_fn(dots.dim(), |(i, j)| {
        if nb[i] == 0.0 || ne[j] == 0.0 {
            1.0
        } else {
            (1.0 - dots[[i, j]] / (nb[i] * ne[j])).clamp(0.0, 2.0)
        }
    }))
}

/// Per-row reward `-scale * sum_j C_ij mu_ij` together with the coupling.
pub fn ot_reward_from_features(
    behavior: ArrayView2<f64>,
    expert: ArrayView2<f64>,
    params: &SinkhornParams,
    scale: f64,
) -> Result<(Vec<f64>, CouplingMatrix)> {
    let cost = cosine_cost_matrix(behavior, expert)?;
    let coupling = sinkhorn(cost.view(), params)?;
    let rewards = coupling.row_costs().iter().map(|c| -scale * c).collect();
    Ok((rewards, coupling))
}

/// Frozen copy of the feature encoder used to score trajectories. The
/// online encoder is the first layer of the actor.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePreprocessor {
    target: MlpParams,
    period: u64,
    refreshes: Vec<u64>,
}

fn first_layer(actor: &MlpParams) -> MlpParams {
    let l: &Layer = &actor.layers()[0];
    MlpParams::from_layers(vec![l.clone()]).expect("a layer of a valid network is a valid network")
}

impl FeaturePreprocessor {
    pub fn new(actor: &MlpParams, period: u64) -> Result<Self> {
        if period == 0 {
            return Err(Error::invalid("target update period must be positive"));
        }
        Ok(Self {
            target: first_layer(actor),
            period,
            refreshes: Vec::new(),
        })
    }

    pub fn target(&self) -> &MlpParams {
        &self.target
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    /// Environment steps at which the target was refreshed so far.
    pub fn refresh_steps(&self) -> &[u64] {
        &self.refreshes
    }

    /// Encodes rows of observation ⧺ goal with the target network.
    pub fn features(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.target.predict_batch(states)
    }

    /// Copies the online encoder into the target when `env_step` is a
    /// positive multiple of the period. Returns whether a refresh happened.
    pub fn maybe_update_target(&mut self, actor: &MlpParams, env_step: u64) -> bool {
        if env_step > 0 && env_step % self.period == 0 {
            self.target = first_layer(actor);
            self.refreshes.push(env_step);
            true
        } else {
            false
        }
    }
}

/// OT rewards for a behavior state sequence against one expert sequence,
/// scored in the target feature space.
pub fn ot_reward(
    behavior_states: ArrayView2<f64>,
    expert_states: ArrayView2<f64>,
    preprocessor: &FeaturePreprocessor,
    config: &OtConfig,
) -> Result<Vec<f64>> {
    let fb = preprocessor.features(behavior_states)?;
    let fe = preprocessor.features(expert_states)?;
    Ok(ot_reward_from_features(fb.view(), fe.view(), &config.sinkhorn_params(), config.scale)?.0)
}

fn stack_states<'a>(rows: impl Iterator<Item = &'a [f64]>, goal: &[f64], n: usize) -> Array2<f64> {
    let mut rows = rows.peekable();
    let obs_dim = rows.peek().map_or(0, |r| r.len());
    let mut m = Array2::zeros((n, obs_dim + goal.len()));
    for (i, obs) in rows.enumerate() {
        for (j, v) in obs.iter().chain(goal).enumerate() {
            m[[i, j]] = *v;
        }
    }
    m
}

/// States reached by a demonstration (observations after each action).
pub fn demo_states(demo: &Trajectory) -> Array2<f64> {
    let n = demo.observations.len() - 1;
    stack_states(demo.observations[1..].iter().map(Vec::as_slice), &demo.goal, n)
}

/// States reached by a behavior episode (next observation of each transition).
pub fn episode_states(episode: &[Transition]) -> Array2<f64> {
    let goal = episode.first().map_or(&[][..], |t| t.goal.as_slice());
    stack_states(episode.iter().map(|t| t.next_observation.as_slice()), goal, episode.len())
}

#[derive(Clone, Debug)]
pub struct AssignedRewards {
    pub episode: Vec<Transition>,
    /// Index of the demonstration whose total reward was highest.
    pub chosen_demo: usize,
    pub coupling: CouplingMatrix,
}

/// Replaces the episode's rewards with OT rewards against the closest
/// demonstration (highest total reward; first on ties).
pub fn assign_episode_rewards(
    episode: Vec<Transition>,
    demos: &[Trajectory],
    preprocessor: &FeaturePreprocessor,
    config: &OtConfig,
) -> Result<AssignedRewards> {
    if demos.is_empty() {
        return Err(Error::invalid("OT rewards need at least one demonstration"));
    }
    if episode.is_empty() {
        return Err(Error::invalid("cannot score an empty episode"));
    }
    let params = config.sinkhorn_params();
    let fb = preprocessor.features(episode_states(&episode).view())?;
    let mut best: Option<(f64, usize, Vec<f64>, CouplingMatrix)> = None;
    for (k, demo) in demos.iter().enumerate() {
        if demo.is_empty() {
            continue;
        }
        let fe = preprocessor.features(demo_states(demo).view())?;
        let (rewards, coupling) = ot_reward_from_features(fb.view(), fe.view(), &params, config.scale)?;
        let total: f64 = rewards.iter().sum();
        if best.as_ref().is_none_or(|(t, ..)| total > *t) {
            best = Some((total, k, rewards, coupling));
        }
    }
    let (_, chosen_demo, rewards, coupling) =
        best.ok_or_else(|| Error::invalid("every demonstration is empty"))?;
    let mut episode = episode;
    for (tr, r) in episode.iter_mut().zip(rewards) {
        tr.reward = r;
    }
    Ok(AssignedRewards {
        episode,
        chosen_demo,
        coupling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Activation;
    use crate::rng::stream;
    use ndarray::array;

    #[test]
    fn cosine_cost_cases() {
        let b = array![[1.0, 0.0], [0.0, 2.0], [-3.0, 0.0], [0.0, 0.0]];
        let e = array![[2.0, 0.0]];
        let c = cosine_cost_matrix(b.view(), e.view()).unwrap();
        assert!(c[[0, 0]].abs() < 1e-15);
        assert!((c[[1, 0]] - 1.0).abs() < 1e-15);
        assert!((c[[2, 0]] - 2.0).abs() < 1e-15);
        assert_eq!(c[[3, 0]], 1.0);
        assert!(cosine_cost_matrix(b.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn constant_features_give_zero_reward() {
        let f = Array2::from_elem((5, 3), 0.4);
        let (r, _) = ot_reward_from_features(f.view(), f.slice(ndarray::s![..3, ..]), &SinkhornParams::default(), 10.0)
            .unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn target_refresh_schedule() {
        let mut rng = stream(3, "pp");
        let mut actor = MlpParams::init(&[6, 8, 2], Activation::Tanh, &mut rng).unwrap();
        let mut pp = FeaturePreprocessor::new(&actor, 100).unwrap();
        let before = pp.target().clone();
        actor = MlpParams::init(&[6, 8, 2], Activation::Tanh, &mut rng).unwrap();
        assert!(!pp.maybe_update_target(&actor, 0));
        assert_eq!(pp.target(), &before);
        assert!(!pp.maybe_update_target(&actor, 99));
        assert!(pp.maybe_update_target(&actor, 100));
        assert_eq!(pp.target().layers()[0], actor.layers()[0]);
        let refreshed = pp.target().clone();
        actor = MlpParams::init(&[6, 8, 2], Activation::Tanh, &mut rng).unwrap();
        assert!(!pp.maybe_update_target(&actor, 101));
        assert_eq!(pp.target(), &refreshed);
        assert_ne!(pp.target().layers()[0], actor.layers()[0]);
    }
}

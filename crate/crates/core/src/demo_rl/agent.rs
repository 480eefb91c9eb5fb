//! Actor-critic networks and their update rules.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::buffer::NStepBatch;
use crate::envsuite::Trajectory;
use crate::error::{Error, Result};
use crate::numkit::{soft_update_in_place, Activation, AdamConfig, AdamState, MlpGrads, MlpParams};

/// Inputs and regression targets for a supervised actor step.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionBatch {
    pub states: Array2<f64>,
    pub targets: Array2<f64>,
}

impl RegressionBatch {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    /// Every (observation ⧺ goal, action) pair of the demonstrations.
    pub fn from_demos(demos: &[Trajectory]) -> Result<Self> {
        let n: usize = demos.iter().map(Trajectory::len).sum();
        let Some(first) = demos.iter().find(|d| !d.is_empty()) else {
            return Err(Error::invalid("demonstration set is empty"));
        };
        let sdim = first.observations[0].len() + first.goal.len();
        let adim = first.actions[0].len();
        let mut states = Array2::zeros((n, sdim));
        let mut targets = Array2::zeros((n, adim));
        let mut row = 0;
        for d in demos {
            for (o, a) in d.observations.iter().zip(&d.actions) {
                if o.len() + d.goal.len() != sdim || a.len() != adim {
                    return Err(Error::shape("demonstrations disagree on dimensions"));
                }
                for (j, v) in o.iter().chain(&d.goal).enumerate() {
                    states[[row, j]] = *v;
                }
                for (j, v) in a.iter().enumerate() {
                    targets[[row, j]] = *v;
                }
                row += 1;
            }
        }
        Ok(Self { states, targets })
    }

    /// Rows selected by `idx`.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            states: self.states.select(Axis(0), idx),
            targets: self.targets.select(Axis(0), idx),
        }
    }
}

/// Mean squared action error `mean_i ||pi(s_i) - a_i||^2`.
pub fn regression_mse(policy: &MlpParams, batch: &RegressionBatch) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let pred = policy.predict_batch(batch.states.view())?;
    let diff = pred - &batch.targets;
    Ok(diff.mapv(|d| d * d).sum() / batch.len() as f64)
}

/// Loss value and parameter gradient of `weight * mean ||pi(s) - a||^2`.
pub fn regression_gradient(policy: &MlpParams, batch: &RegressionBatch, weight: f64) -> Result<(f64, MlpGrads)> {
    if batch.is_empty() {
        return Ok((0.0, MlpGrads::zeros_like(policy)));
    }
    let tape = policy.forward_batch(batch.states.clone())?;
    let diff = tape.output() - &batch.targets;
    let n = batch.len() as f64;
    let loss = weight * diff.mapv(|d| d * d).sum() / n;
    let upstream = diff * (2.0 * weight / n);
    let (grads, _) = policy.backward_batch(&tape, upstream.view(), true)?;
    Ok((loss, grads.expect("requested")))
}

/// Freshly initialised tanh-headed actor mapping observation ⧺ goal to actions.
pub fn init_actor<R: Rng + ?Sized>(
    state_dim: usize,
    act_dim: usize,
    hidden_dim: usize,
    hidden_layers: usize,
    rng: &mut R,
) -> Result<MlpParams> {
    let mut sizes = vec![state_dim];
    sizes.extend(std::iter::repeat_n(hidden_dim, hidden_layers));
    sizes.push(act_dim);
    MlpParams::init(&sizes, Activation::Tanh, rng)
}

/// Critic mapping observation ⧺ goal ⧺ action to a scalar.
pub fn init_critic<R: Rng + ?Sized>(
    state_dim: usize,
    act_dim: usize,
    hidden_dim: usize,
    hidden_layers: usize,
    rng: &mut R,
) -> Result<MlpParams> {
    let mut sizes = vec![state_dim + act_dim];
    sizes.extend(std::iter::repeat_n(hidden_dim, hidden_layers));
    sizes.push(1);
    MlpParams::init(&sizes, Activation::Identity, rng)
}

/// Behavior cloning by minibatch Adam on the demonstration pairs. An epoch
/// is one pass over the (shuffled) pairs. Returns the actor and its final
/// MSE over all pairs.
pub fn bc_pretrain<R: Rng + ?Sized>(
    demos: &[Trajectory],
    mut actor: MlpParams,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<(MlpParams, f64)> {
    let data = RegressionBatch::from_demos(demos)?;
    if data.states.ncols() != actor.input_dim() || data.targets.ncols() != actor.output_dim() {
        return Err(Error::shape(format!(
            "actor maps {} -> {}, demonstrations need {} -> {}",
            actor.input_dim(),
            actor.output_dim(),
            data.states.ncols(),
            data.targets.ncols()
        )));
    }
    let batch_size = batch_size.max(1);
    let mut opt = AdamState::new(&actor, AdamConfig::with_lr(lr));
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..epochs {
        if data.len() <= batch_size {
            let (_, g) = regression_gradient(&actor, &data, 1.0)?;
            opt.step(&mut actor, &g)?;
            continue;
        }
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let (_, g) = regression_gradient(&actor, &data.select(chunk), 1.0)?;
            opt.step(&mut actor, &g)?;
        }
    }
    let mse = regression_mse(&actor, &data)?;
    Ok((actor, mse))
}

/// Scalar n-step target `sum_{i<k} gamma^i r_i + gamma^n * bootstrap`, where
/// `bootstrap` is `min_k Q_target(s_{t+n}, a_{t+n})` (or `None` when the
/// window ended on a terminal step).
pub fn nstep_target(rewards: &[f64], gamma: f64, n: usize, bootstrap: Option<f64>) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n-step horizon must be at least 1"));
    }
    if rewards.len() > n {
        return Err(Error::invalid("more rewards than the n-step horizon"));
    }
    let mut g = 1.0;
    let mut y = 0.0;
    for r in rewards {
        y += g * r;
        g *= gamma;
    }
    Ok(y + bootstrap.map_or(0.0, |q| g * q))
}

/// Actor, twin critics, their slow-moving targets and optimizer states.
#[derive(Clone, Debug)]
pub struct AgentBundle {
    pub actor: MlpParams,
    pub critic1: MlpParams,
    pub critic2: MlpParams,
    pub target_critic1: MlpParams,
    pub target_critic2: MlpParams,
    pub actor_opt: AdamState,
    pub critic1_opt: AdamState,
    pub critic2_opt: AdamState,
    pub env_steps: u64,
    pub updates: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActorLoss {
    /// `-(1 - lambda) * mean Q(s, pi(s))`
    pub q_term: f64,
    /// `alpha * lambda * mean ||a_e - pi(s_e)||^2`
    pub bc_term: f64,
    /// Weighted auxiliary regression loss (distillation of earlier tasks).
    pub aux_term: f64,
}

fn join_cols(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    concatenate(Axis(1), &[a, b]).map_err(|e| Error::shape(e.to_string()))
}

fn column(q: &Array2<f64>) -> Array1<f64> {
    q.column(0).to_owned()
}

impl AgentBundle {
    /// Critics are freshly initialised; targets start as exact copies.
    pub fn new<R: Rng + ?Sized>(actor: MlpParams, hidden_dim: usize, hidden_layers: usize, lr: f64, rng: &mut R) -> Result<Self> {
        let sdim = actor.input_dim();
        let adim = actor.output_dim();
        let critic1 = init_critic(sdim, adim, hidden_dim, hidden_layers, rng)?;
        let critic2 = init_critic(sdim, adim, hidden_dim, hidden_layers, rng)?;
        let adam = AdamConfig::with_lr(lr);
        Ok(Self {
            actor_opt: AdamState::new(&actor, adam),
            critic1_opt: AdamState::new(&critic1, adam),
            critic2_opt: AdamState::new(&critic2, adam),
            target_critic1: critic1.clone(),
            target_critic2: critic2.clone(),
            actor,
            critic1,
            critic2,
            env_steps: 0,
            updates: 0,
        })
    }

    /// Per-sample minimum of the two critics (or target critics).
    pub fn min_q(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>, targets: bool) -> Result<Array1<f64>> {
        let x = join_cols(states, actions)?;
        let (c1, c2) = if targets {
            (&self.target_critic1, &self.target_critic2)
        } else {
            (&self.critic1, &self.critic2)
        };
        let q1 = column(&c1.predict_batch(x.view())?);
        let q2 = column(&c2.predict_batch(x.view())?);
        Ok(ndarray::Zip::from(&q1).and(&q2).map_collect(|a, b| a.min(*b)))
    }

    /// `y = R + discount * min_k Q_target_k(s', pi(s'))` for every row.
    pub fn compute_targets(&self, batch: &NStepBatch) -> Result<Array1<f64>> {
        let next_actions = self.actor.predict_batch(batch.next_states.view())?;
        let q_next = self.min_q(batch.next_states.view(), next_actions.view(), true)?;
        Ok(&batch.returns + &(&batch.bootstrap_discount * &q_next))
    }

    /// One Adam step per critic toward the shared clipped double-Q target,
    /// then a soft update of both targets. Returns the two mean squared
    /// errors measured before the step.
    pub fn critic_update(&mut self, batch: &NStepBatch, tau: f64) -> Result<(f64, f64)> {
        let y = self.compute_targets(batch)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("critic target y".into()));
        }
        let x = join_cols(batch.states.view(), batch.actions.view())?;
        let n = batch.len() as f64;
        let mut losses = [0.0; 2];
        for (k, (critic, opt)) in [
            (&mut self.critic1, &mut self.critic1_opt),
            (&mut self.critic2, &mut self.critic2_opt),
        ]
        .into_iter()
        .enumerate()
        {
            let tape = critic.forward_batch(x.clone())?;
            let diff = column(tape.output()) - &y;
            losses[k] = diff.mapv(|d| d * d).sum() / n;
            let upstream = (diff * (2.0 / n)).insert_axis(Axis(1));
            let (grads, _) = critic.backward_batch(&tape, upstream.view(), true)?;
            opt.step(critic, &grads.expect("requested"))?;
        }
        soft_update_in_place(&mut self.target_critic1, &self.critic1, tau)?;
        soft_update_in_place(&mut self.target_critic2, &self.critic2, tau)?;
        Ok((losses[0], losses[1]))
    }

    /// One Adam step on the actor for
    /// `-(1 - lambda) * mean Q(s, pi(s)) + alpha * lambda * mean ||a_e - pi(s_e)||^2`
    /// plus an optional weighted auxiliary regression. Critics are read, not
    /// updated. `Q` is the per-sample min of both critics when `min_q`.
    pub fn actor_update(
        &mut self,
        states: ArrayView2<f64>,
        demo: Option<&RegressionBatch>,
        alpha: f64,
        lambda: f64,
        min_q: bool,
        aux: Option<(&RegressionBatch, f64)>,
    ) -> Result<ActorLoss> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Range {
                name: "lambda",
                detail: format!("{lambda} not in [0, 1]"),
            });
        }
        let mut loss = ActorLoss::default();
        let mut grads = MlpGrads::zeros_like(&self.actor);
        let q_weight = 1.0 - lambda;
        if q_weight > 0.0 {
            if states.nrows() == 0 {
                return Err(Error::invalid("actor update needs a non-empty replay batch"));
            }
            let sdim = states.ncols();
            let n = states.nrows() as f64;
            let tape_a = self.actor.forward_batch(states.to_owned())?;
            let x = join_cols(states, tape_a.output().view())?;
            let tape1 = self.critic1.forward_batch(x.clone())?;
            let q1 = column(tape1.output());
            let (q, pick1) = if min_q {
                let tape2 = self.critic2.forward_batch(x)?;
                let q2 = column(tape2.output());
                let pick1: Vec<bool> = q1.iter().zip(&q2).map(|(a, b)| a <= b).collect();
                let q: Array1<f64> = q1.iter().zip(&q2).map(|(a, b)| a.min(*b)).collect();
                let up2 = Array2::from_shape_fn((q.len(), 1), |(i, _)| if pick1[i] { 0.0 } else { -q_weight / n });
                let (_, gx2) = self.critic2.backward_batch(&tape2, up2.view(), false)?;
                (q, Some((pick1, gx2)))
            } else {
                (q1, None)
            };
            loss.q_term = -q_weight * q.sum() / n;
            let up1 = Array2::from_shape_fn((q.len(), 1), |(i, _)| match &pick1 {
                Some((p, _)) if !p[i] => 0.0,
                _ => -q_weight / n,
            });
            let (_, mut gx) = self.critic1.backward_batch(&tape1, up1.view(), false)?;
            if let Some((_, gx2)) = pick1 {
                gx += &gx2;
            }
            let g_action = gx.slice(s![.., sdim..]).to_owned();
            let (ga, _) = self.actor.backward_batch(&tape_a, g_action.view(), true)?;
            grads.add_scaled(&ga.expect("requested"), 1.0)?;
        }
        let bc_weight = alpha * lambda;
        if lambda > 0.0 {
            let demo = demo
                .filter(|d| !d.is_empty())
                .ok_or_else(|| Error::invalid("lambda > 0 requires a non-empty demonstration batch"))?;
            let (l, g) = regression_gradient(&self.actor, demo, bc_weight)?;
            loss.bc_term = l;
            grads.add_scaled(&g, 1.0)?;
        }
        if let Some((batch, weight)) = aux {
            if weight > 0.0 && !batch.is_empty() {
                let (l, g) = regression_gradient(&self.actor, batch, weight)?;
                loss.aux_term = l;
                grads.add_scaled(&g, 1.0)?;
            }
        }
        self.actor_opt.step(&mut self.actor, &grads)?;
        Ok(loss)
    }
}

/// Uniform random action during the first `exploration_steps` steps, then
/// the greedy action plus `N(0, std^2)` noise, clipped to `[-1, 1]`.
pub fn exploration_action<R: Rng + ?Sized>(
    actor: &MlpParams,
    state: &[f64],
    std: f64,
    step: u64,
    exploration_steps: u64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if step < exploration_steps {
        return Ok((0..actor.output_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect());
    }
    let mut a = actor.apply(state)?;
    if std > 0.0 {
        for v in &mut a {
            let z: f64 = StandardNormal.sample(rng);
            *v += std * z;
        }
    }
    for v in &mut a {
        *v = v.clamp(-1.0, 1.0);
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;

    #[test]
    fn nstep_target_arithmetic() {
        assert!((nstep_target(&[1.0], 0.99, 1, Some(2.0)).unwrap() - 2.98).abs() < 1e-12);
        assert_eq!(nstep_target(&[1.0, 1.0, 1.0], 0.5, 3, Some(4.0)).unwrap(), 2.25);
        assert!(nstep_target(&[1.0], 0.5, 0, None).is_err());
    }

    #[test]
    fn zero_discount_keeps_first_reward() {
        for n in 1..5 {
            let rewards = vec![3.5; n];
            // 0^0 = 1 for the first reward, every later term vanishes
            assert_eq!(nstep_target(&rewards, 0.0, n, Some(100.0)).unwrap(), 3.5);
        }
    }

    #[test]
    fn exploration_phases() {
        let mut rng = stream(1, "a");
        let actor = init_actor(6, 2, 8, 2, &mut rng).unwrap();
        let other = init_actor(6, 2, 8, 2, &mut rng).unwrap();
        let s = [0.1, 0.2, 0.0, 0.0, 0.6, 0.6];
        let greedy = actor.apply(&s).unwrap();
        assert_eq!(exploration_action(&actor, &s, 0.0, 600, 500, &mut rng).unwrap(), greedy);
        let a = exploration_action(&actor, &s, 0.1, 0, 500, &mut stream(2, "e")).unwrap();
        let b = exploration_action(&other, &s, 0.1, 0, 500, &mut stream(2, "e")).unwrap();
        assert_eq!(a, b);
        let mut rng = stream(3, "c");
        for step in 0..100_000u64 {
            let a = exploration_action(&actor, &s, 5.0, step % 1000, 500, &mut rng).unwrap();
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn lambda_out_of_range_rejected() {
        let mut rng = stream(4, "b");
        let actor = init_actor(3, 1, 4, 1, &mut rng).unwrap();
        let mut bundle = AgentBundle::new(actor, 4, 1, 1e-3, &mut rng).unwrap();
        let s = array![[0.1, 0.2, 0.3]];
        assert!(matches!(
            bundle.actor_update(s.view(), None, 0.3, 1.5, true, None),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn bc_zero_epochs_is_identity() {
        let spec = &crate::envsuite::point_reach_4(crate::envsuite::GoalEncoding::GoalVector)[0];
        let demos = crate::envsuite::collect_demonstrations(spec, 1, 0.0, 1).unwrap();
        let mut rng = stream(5, "bc");
        let actor = init_actor(6, 2, 8, 2, &mut rng).unwrap();
        let (out, _) = bc_pretrain(&demos, actor.clone(), 0, 1e-3, 256, &mut rng).unwrap();
        assert_eq!(out, actor);
        assert!(bc_pretrain(&[], actor, 1, 1e-3, 256, &mut rng).is_err());
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::sinusoidal_embedding;

/// Integration step of the point-mass dynamics.
pub const DT: f64 = 0.1;
pub const OBS_DIM: usize = 4;
pub const ACT_DIM: usize = 2;

/// How a task's goal is presented to goal-conditioned policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GoalEncoding {
    /// The 2-d goal position itself.
    GoalVector,
    /// One-hot over `size` task slots.
    OneHot { size: usize },
    /// Sinusoidal code of the task index.
    Sinusoidal { dim: usize },
}

impl GoalEncoding {
    pub fn dim(self) -> usize {
        match self {
            GoalEncoding::GoalVector => 2,
            GoalEncoding::OneHot { size } => size,
            GoalEncoding::Sinusoidal { dim } => dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: u32,
    pub goal: [f64; 2],
    pub dynamics_gain: f64,
    pub success_radius: f64,
    pub max_episode_steps: u32,
    pub goal_encoding: GoalEncoding,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.goal.iter().all(|g| g.is_finite() && (-1.0..=1.0).contains(g)) {
            return Err(Error::Range {
                name: "goal",
                detail: format!("{:?} outside the arena [-1, 1]^2", self.goal),
            });
        }
        if !(self.success_radius > 0.0) {
            return Err(Error::Range {
                name: "success_radius",
                detail: format!("{} must be positive", self.success_radius),
            });
        }
        if !(self.dynamics_gain > 0.0) || !self.dynamics_gain.is_finite() {
            return Err(Error::Range {
                name: "dynamics_gain",
                detail: format!("{} must be positive", self.dynamics_gain),
            });
        }
        if self.max_episode_steps == 0 {
            return Err(Error::Range {
                name: "max_episode_steps",
                detail: "must be positive".into(),
            });
        }
        match self.goal_encoding {
            GoalEncoding::OneHot { size } if self.task_id as usize >= size => Err(Error::Range {
                name: "task_id",
                detail: format!("{} does not fit a one-hot of size {size}", self.task_id),
            }),
            GoalEncoding::Sinusoidal { dim } if dim == 0 || dim % 2 != 0 => Err(Error::Range {
                name: "goal_encoding.dim",
                detail: format!("sinusoidal dim {dim} must be even and positive"),
            }),
            _ => Ok(()),
        }
    }

    /// The goal descriptor fed to goal-conditioned networks.
    pub fn encoded_goal(&self) -> Vec<f64> {
        match self.goal_encoding {
            GoalEncoding::GoalVector => self.goal.to_vec(),
            GoalEncoding::OneHot { size } => {
                let mut v = vec![0.0; size];
                v[self.task_id as usize] = 1.0;
                v
            }
            GoalEncoding::Sinusoidal { dim } => {
                sinusoidal_embedding(self.task_id, dim).expect("validated even dim")
            }
        }
    }

    pub fn goal_dim(&self) -> usize {
        self.goal_encoding.dim()
    }

    pub fn distance_to_goal(&self, position: [f64; 2]) -> f64 {
        ((position[0] - self.goal[0]).powi(2) + (position[1] - self.goal[1]).powi(2)).sqrt()
    }

    pub fn is_success(&self, position: [f64; 2]) -> bool {
        self.distance_to_goal(position) <= self.success_radius
    }
}

/// The default four-task suite: goals on the diagonals, distinct gains.
pub fn point_reach_4(encoding: GoalEncoding) -> Vec<TaskSpec> {
    let goals = [[0.6, 0.6], [-0.6, 0.6], [-0.6, -0.6], [0.6, -0.6]];
    let gains = [0.7, 1.0, 1.3, 1.6];
    goals
        .iter()
        .zip(gains)
        .enumerate()
        .map(|(i, (&goal, dynamics_gain))| TaskSpec {
            task_id: i as u32,
            goal,
            dynamics_gain,
            success_radius: 0.1,
            max_episode_steps: 100,
            goal_encoding: encoding,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub step_count: u32,
    pub done: bool,
}

impl EnvState {
    pub fn observation(&self) -> Vec<f64> {
        vec![self.position[0], self.position[1], self.velocity[0], self.velocity[1]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Reached the success disk (as opposed to running out of time).
    pub success: bool,
}

/// Start uniformly in the arena, outside the success disk.
pub fn reset<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> (EnvState, Vec<f64>) {
    let position = loop {
        let p = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        if !spec.is_success(p) {
            break p;
        }
    };
    let state = EnvState {
        position,
        velocity: [0.0; 2],
        step_count: 0,
        done: false,
    };
    let obs = state.observation();
    (state, obs)
}

/// Advance one step: `p <- clip(p + dt * gain * clip(a))`; reward is the
/// negative goal distance plus a unit bonus inside the success disk.
pub fn step(spec: &TaskSpec, state: &mut EnvState, action: &[f64]) -> Result<StepOutcome> {
    if state.done {
        return Err(Error::EpisodeFinished);
    }
    if action.len() != ACT_DIM {
        return Err(Error::shape(format!("action length {} != {ACT_DIM}", action.len())));
    }
    let mut next = state.position;
    for i in 0..2 {
        let a = if action[i].is_nan() { 0.0 } else { action[i].clamp(-1.0, 1.0) };
        next[i] = (next[i] + DT * spec.dynamics_gain * a).clamp(-1.0, 1.0);
    }
    state.velocity = [(next[0] - state.position[0]) / DT, (next[1] - state.position[1]) / DT];
    state.position = next;
    state.step_count += 1;
    let dist = spec.distance_to_goal(next);
    let success = dist <= spec.success_radius;
    let reward = -dist + if success { 1.0 } else { 0.0 };
    state.done = success || state.step_count >= spec.max_episode_steps;
    Ok(StepOutcome {
        observation: state.observation(),
        reward,
        done: state.done,
        success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn task() -> TaskSpec {
        point_reach_4(GoalEncoding::GoalVector)[1].clone()
    }

    #[test]
    fn reset_is_deterministic_and_avoids_goal() {
        let spec = task();
        let (a, oa) = reset(&spec, &mut stream(4, "env"));
        let (b, _) = reset(&spec, &mut stream(4, "env"));
        assert_eq!(a, b);
        assert_eq!(oa.len(), OBS_DIM);
        let mut rng = stream(5, "env");
        for _ in 0..1000 {
            let (s, _) = reset(&spec, &mut rng);
            assert!(spec.distance_to_goal(s.position) > spec.success_radius);
            assert_eq!(s.velocity, [0.0, 0.0]);
        }
    }

    #[test]
    fn zero_action_keeps_position() {
        let spec = task();
        let mut s = EnvState {
            position: [0.2, -0.3],
            velocity: [0.0; 2],
            step_count: 0,
            done: false,
        };
        let out = step(&spec, &mut s, &[0.0, 0.0]).unwrap();
        assert_eq!(s.position, [0.2, -0.3]);
        assert_eq!(out.reward, -spec.distance_to_goal([0.2, -0.3]));
        assert!(!out.done);
    }

    #[test]
    fn unit_gain_moves_by_dt() {
        let spec = task();
        assert_eq!(spec.dynamics_gain, 1.0);
        let mut s = EnvState {
            position: [0.0, 0.0],
            velocity: [0.0; 2],
            step_count: 0,
            done: false,
        };
        step(&spec, &mut s, &[1.0, 0.0]).unwrap();
        assert!((s.position[0] - 0.1).abs() < 1e-15 && s.position[1] == 0.0);
        assert!((s.velocity[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inside_disk_earns_bonus_and_terminates() {
        let spec = task();
        let mut s = EnvState {
            position: spec.goal,
            velocity: [0.0; 2],
            step_count: 0,
            done: false,
        };
        let out = step(&spec, &mut s, &[0.1, -0.2]).unwrap();
        assert!(out.done && out.success);
        assert!(out.reward > 0.9);
        assert!(matches!(step(&spec, &mut s, &[0.0, 0.0]), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn timeout_terminates() {
        let mut spec = task();
        spec.max_episode_steps = 3;
        let mut s = EnvState {
            position: [0.9, -0.9],
            velocity: [0.0; 2],
            step_count: 0,
            done: false,
        };
        for i in 0..3 {
            let out = step(&spec, &mut s, &[0.0, 0.0]).unwrap();
            assert_eq!(out.done, i == 2);
            assert!(!out.success);
        }
    }

    #[test]
    fn encodings() {
        let mut spec = task();
        assert_eq!(spec.encoded_goal(), vec![-0.6, 0.6]);
        spec.goal_encoding = GoalEncoding::OneHot { size: 4 };
        assert_eq!(spec.encoded_goal(), vec![0.0, 1.0, 0.0, 0.0]);
        spec.goal_encoding = GoalEncoding::Sinusoidal { dim: 2 };
        assert_eq!(spec.encoded_goal(), vec![1f64.sin(), 1f64.cos()]);
        spec.goal_encoding = GoalEncoding::OneHot { size: 1 };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = task();
        spec.goal = [1.5, 0.0];
        assert!(spec.validate().is_err());
        let mut spec = task();
        spec.success_radius = 0.0;
        assert!(spec.validate().is_err());
        let mut spec = task();
        spec.dynamics_gain = -1.0;
        assert!(spec.validate().is_err());
    }
}

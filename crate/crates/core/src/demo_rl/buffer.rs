//! Episode-structured replay storage.
//!
//! Episodes are stored whole and evicted whole, so an n-step window starting
//! at any sampled index never crosses into a neighbouring episode.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::binio::{check_len, read_f32s, read_magic, read_u32, read_u8, write_f32s, write_u32};
use crate::error::{Error, PathContext, Result};
use crate::numkit::MlpParams;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    /// True only when the episode terminated (goal reached); a timeout on the
    /// final transition leaves this false.
    pub done: bool,
    pub goal: Vec<f64>,
    pub episode: u64,
    pub step: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub index: u64,
    pub goal: Vec<f64>,
    pub transitions: Vec<Transition>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// An n-step minibatch. Rows of `states`/`next_states` are observation ⧺ goal.
/// `bootstrap_discount` is `gamma^k` for a window of `k` steps, or 0 when the
/// window ended on a terminal transition.
#[derive(Clone, Debug)]
pub struct NStepBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub returns: Array1<f64>,
    pub bootstrap_discount: Array1<f64>,
    pub next_states: Array2<f64>,
}

impl NStepBatch {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    episodes: VecDeque<Episode>,
    /// Global offset of each stored episode's first transition.
    starts: VecDeque<u64>,
    end_offset: u64,
    total: usize,
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    goal_dim: usize,
    next_episode: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize, goal_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(Self {
            episodes: VecDeque::new(),
            starts: VecDeque::new(),
            end_offset: 0,
            total: 0,
            capacity,
            obs_dim,
            act_dim,
            goal_dim,
            next_episode: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.obs_dim, self.act_dim, self.goal_dim)
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flat_map(|e| e.transitions.iter())
    }

    /// Appends a complete episode, assigning its episode index, then evicts
    /// whole oldest episodes until the capacity holds again (the newest
    /// episode is always kept).
    pub fn add_episode(&mut self, mut transitions: Vec<Transition>) -> Result<()> {
        let Some(first) = transitions.first() else {
            return Err(Error::invalid("cannot store an empty episode"));
        };
        let goal = first.goal.clone();
        for (t, tr) in transitions.iter().enumerate() {
            if tr.observation.len() != self.obs_dim
                || tr.next_observation.len() != self.obs_dim
                || tr.action.len() != self.act_dim
                || tr.goal.len() != self.goal_dim
            {
                return Err(Error::shape(format!("transition {t} does not match buffer dims")));
            }
            if tr.goal != goal {
                return Err(Error::invalid("an episode must carry a single goal"));
            }
            if !tr.reward.is_finite() {
                return Err(Error::NonFinite(format!("reward of transition {t}")));
            }
            if tr.action.iter().any(|a| !(-1.0..=1.0).contains(a)) {
                return Err(Error::Range {
                    name: "action",
                    detail: format!("transition {t} has an entry outside [-1, 1]"),
                });
            }
            if tr.done && t + 1 != transitions.len() {
                return Err(Error::invalid("terminal transition before the end of the episode"));
            }
        }
        let index = self.next_episode;
        self.next_episode += 1;
        for (t, tr) in transitions.iter_mut().enumerate() {
            tr.episode = index;
            tr.step = t as u32;
        }
        let n = transitions.len();
        self.starts.push_back(self.end_offset);
        self.end_offset += n as u64;
        self.total += n;
        self.episodes.push_back(Episode {
            index,
            goal,
            transitions,
        });
        while self.total > self.capacity && self.episodes.len() > 1 {
            let old = self.episodes.pop_front().expect("len > 1");
            self.starts.pop_front();
            self.total -= old.len();
        }
        Ok(())
    }

    /// Uniform draw over stored `(episode, step)` pairs.
    pub fn sample_position<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, usize)> {
        if self.total == 0 {
            return Err(Error::invalid("cannot sample from an empty replay buffer"));
        }
        let g = self.starts[0] + rng.random_range(0..self.total as u64);
        let e = self.starts.partition_point(|&s| s <= g) - 1;
        Ok((e, (g - self.starts[e]) as usize))
    }

    pub fn transition(&self, episode: usize, step: usize) -> &Transition {
        &self.episodes[episode].transitions[step]
    }

    /// Samples `batch` n-step windows. A window that would run past the end
    /// of its episode is truncated there: no bootstrap after a terminal
    /// transition, bootstrap from the final state after a timeout.
    pub fn sample_nstep<R: Rng + ?Sized>(&self, batch: usize, n: usize, gamma: f64, rng: &mut R) -> Result<NStepBatch> {
        if n == 0 {
            return Err(Error::invalid("n-step horizon must be at least 1"));
        }
        let sdim = self.obs_dim + self.goal_dim;
        let mut states = Array2::zeros((batch, sdim));
        let mut next_states = Array2::zeros((batch, sdim));
        let mut actions = Array2::zeros((batch, self.act_dim));
        let mut returns = Array1::zeros(batch);
        let mut discount = Array1::zeros(batch);
        for b in 0..batch {
            let (e, t) = self.sample_position(rng)?;
            let ep = &self.episodes[e].transitions;
            let k = n.min(ep.len() - t);
            let mut ret = 0.0;
            let mut g = 1.0;
            for tr in &ep[t..t + k] {
                ret += g * tr.reward;
                g *= gamma;
            }
            let last = &ep[t + k - 1];
            let first = &ep[t];
            fill_state(&mut states, b, &first.observation, &first.goal);
            fill_state(&mut next_states, b, &last.next_observation, &last.goal);
            for (j, a) in first.action.iter().enumerate() {
                actions[[b, j]] = *a;
            }
            returns[b] = ret;
            discount[b] = if last.done { 0.0 } else { g };
        }
        Ok(NStepBatch {
            states,
            actions,
            returns,
            bootstrap_discount: discount,
            next_states,
        })
    }

    /// Rows of observation ⧺ goal for every stored transition, in order.
    pub fn state_matrix(&self) -> Array2<f64> {
        let sdim = self.obs_dim + self.goal_dim;
        let mut m = Array2::zeros((self.total, sdim));
        for (i, tr) in self.transitions().enumerate() {
            fill_state(&mut m, i, &tr.observation, &tr.goal);
        }
        m
    }

    pub fn action_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.total, self.act_dim));
        for (i, tr) in self.transitions().enumerate() {
            for (j, a) in tr.action.iter().enumerate() {
                m[[i, j]] = *a;
            }
        }
        m
    }

    /// Replaces every stored action with `policy(o, g)`; everything else is
    /// left untouched.
    pub fn relabel_actions(&mut self, policy: &MlpParams) -> Result<()> {
        if policy.input_dim() != self.obs_dim + self.goal_dim || policy.output_dim() != self.act_dim {
            return Err(Error::shape(format!(
                "policy maps {} -> {}, buffer needs {} -> {}",
                policy.input_dim(),
                policy.output_dim(),
                self.obs_dim + self.goal_dim,
                self.act_dim
            )));
        }
        if self.total == 0 {
            return Ok(());
        }
        let labels = policy.predict_batch(self.state_matrix().view())?;
        let mut row = 0;
        for ep in &mut self.episodes {
            for tr in &mut ep.transitions {
                tr.action = labels.row(row).to_vec();
                row += 1;
            }
        }
        Ok(())
    }

    /// Copy holding only the most recent whole episodes that fit in
    /// `max_transitions`.
    pub fn tail(&self, max_transitions: usize) -> Result<ReplayBuffer> {
        let mut out = self.clone();
        out.capacity = max_transitions.max(1);
        while out.total > out.capacity && out.episodes.len() > 1 {
            let old = out.episodes.pop_front().expect("len > 1");
            out.starts.pop_front();
            out.total -= old.len();
        }
        Ok(out)
    }
}

fn fill_state(m: &mut Array2<f64>, row: usize, obs: &[f64], goal: &[f64]) {
    let mut r = m.row_mut(row);
    for (j, v) in obs.iter().chain(goal.iter()).enumerate() {
        r[j] = *v;
    }
}

pub const BUFFER_MAGIC: &[u8; 4] = b"PTRB";
pub const BUFFER_VERSION: u32 = 1;
const WHAT: &str = "replay buffer file";

/// `PTRB` layout: dims (obs, act, goal), episode count, then per episode
/// `T`, goal, and `T` records of (obs, act, reward, next_obs, done u8).
pub fn write_buffer<W: Write>(mut w: W, buffer: &ReplayBuffer) -> Result<()> {
    w.write_all(BUFFER_MAGIC)?;
    write_u32(&mut w, BUFFER_VERSION)?;
    write_u32(&mut w, buffer.obs_dim as u32)?;
    write_u32(&mut w, buffer.act_dim as u32)?;
    write_u32(&mut w, buffer.goal_dim as u32)?;
    write_u32(&mut w, buffer.episodes.len() as u32)?;
    for ep in &buffer.episodes {
        write_u32(&mut w, ep.len() as u32)?;
        write_f32s(&mut w, ep.goal.iter().copied())?;
        for tr in &ep.transitions {
            write_f32s(&mut w, tr.observation.iter().copied())?;
            write_f32s(&mut w, tr.action.iter().copied())?;
            write_f32s(&mut w, [tr.reward])?;
            write_f32s(&mut w, tr.next_observation.iter().copied())?;
            w.write_all(&[u8::from(tr.done)])?;
        }
    }
    Ok(())
}

/// Reads a `PTRB` stream; `capacity` bounds the reconstructed buffer.
pub fn read_buffer<R: Read>(mut r: R, capacity: usize) -> Result<ReplayBuffer> {
    read_magic(&mut r, BUFFER_MAGIC, WHAT)?;
    let version = read_u32(&mut r)?;
    if version != BUFFER_VERSION {
        return Err(Error::Format {
            what: WHAT,
            detail: format!("unsupported version {version}"),
        });
    }
    let obs_dim = check_len(read_u32(&mut r)?, 1 << 16, WHAT, "obs_dim")?;
    let act_dim = check_len(read_u32(&mut r)?, 1 << 16, WHAT, "act_dim")?;
    let goal_dim = check_len(read_u32(&mut r)?, 1 << 16, WHAT, "goal_dim")?;
    let n = check_len(read_u32(&mut r)?, 1 << 28, WHAT, "n_episodes")?;
    let mut buffer = ReplayBuffer::new(capacity, obs_dim, act_dim, goal_dim)?;
    for _ in 0..n {
        let t = check_len(read_u32(&mut r)?, 1 << 24, WHAT, "episode length")?;
        let goal = read_f32s(&mut r, goal_dim)?;
        let mut transitions = Vec::with_capacity(t);
        for _ in 0..t {
            let observation = read_f32s(&mut r, obs_dim)?;
            let action = read_f32s(&mut r, act_dim)?;
            let reward = read_f32s(&mut r, 1)?[0];
            let next_observation = read_f32s(&mut r, obs_dim)?;
            let done = match read_u8(&mut r)? {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::Format {
                        what: WHAT,
                        detail: format!("done flag {other}"),
                    })
                }
            };
            transitions.push(Transition {
                observation,
                action,
                reward,
                next_observation,
                done,
                goal: goal.clone(),
                episode: 0,
                step: 0,
            });
        }
        buffer.add_episode(transitions)?;
    }
    Ok(buffer)
}

pub fn save_buffer(path: &Path, buffer: &ReplayBuffer) -> Result<()> {
    let f = std::fs::File::create(path).at_path(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_buffer(&mut w, buffer)?;
    w.flush().at_path(path)
}

pub fn load_buffer(path: &Path, capacity: usize) -> Result<ReplayBuffer> {
    let f = std::fs::File::open(path).at_path(path)?;
    read_buffer(std::io::BufReader::new(f), capacity)
}

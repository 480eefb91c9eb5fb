use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::demo_rl::{load_buffer, read_buffer, save_buffer, write_buffer, ReplayBuffer};
use crate::error::{Error, PathContext, Result};
use crate::numkit::io::{load_weights, quantize_f32, save_weights};
use crate::numkit::MlpParams;

/// What survives of a learned task: its expert and a slice of its replay
/// buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskArtifact {
    pub task_id: u32,
    pub expert: MlpParams,
    pub buffer: ReplayBuffer,
    /// Set once every stored action equals `expert(o, g)`.
    pub relabeled: bool,
    /// Seed of the run that produced the artifact.
    pub seed: u64,
}

/// Copy of `buffer` whose actions are the policy's greedy actions.
pub fn relabel_buffer(buffer: &ReplayBuffer, expert: &MlpParams) -> Result<ReplayBuffer> {
    let mut out = buffer.clone();
    out.relabel_actions(expert)?;
    Ok(out)
}

const WEIGHTS_FILE: &str = "actor.ptwt";
const BUFFER_FILE: &str = "buffer.ptrb";
const MANIFEST_FILE: &str = "manifest.txt";

impl TaskArtifact {
    /// Keeps the last `slice` transitions (whole episodes) of a training
    /// buffer.
    pub fn new(task_id: u32, expert: MlpParams, buffer: &ReplayBuffer, slice: usize, seed: u64) -> Result<Self> {
        let (obs, act, goal) = buffer.dims();
        if expert.input_dim() != obs + goal || expert.output_dim() != act {
            return Err(Error::shape(format!("expert for task {task_id} does not match its buffer")));
        }
        Ok(Self {
            task_id,
            expert,
            buffer: buffer.tail(slice)?,
            relabeled: false,
            seed,
        })
    }

    pub fn relabeled(mut self) -> Result<Self> {
        self.buffer.relabel_actions(&self.expert)?;
        self.relabeled = true;
        Ok(self)
    }

    /// The artifact exactly as a save/load cycle returns it (f32 payloads).
    pub fn persisted(&self) -> Result<Self> {
        let mut bytes = Vec::new();
        write_buffer(&mut bytes, &self.buffer)?;
        let expert = quantize_f32(&self.expert);
        let mut buffer = read_buffer(bytes.as_slice(), self.buffer.capacity())?;
        if self.relabeled {
            buffer.relabel_actions(&expert)?;
        }
        Ok(Self {
            expert,
            buffer,
            ..self.clone()
        })
    }

    /// Writes `actor.ptwt`, `buffer.ptrb` and a key=value manifest into `dir`.
    /// `header` lines are prefixed with `#` in the manifest.
    pub fn save(&self, dir: &Path, header: &[String]) -> Result<()> {
        fs::create_dir_all(dir).at_path(dir)?;
        save_weights(&dir.join(WEIGHTS_FILE), &self.expert)?;
        save_buffer(&dir.join(BUFFER_FILE), &self.buffer)?;
        let (obs, act, goal) = self.buffer.dims();
        let mut m = String::new();
        for h in header {
            writeln!(m, "# {h}").expect("string write");
        }
        writeln!(m, "task_id={}", self.task_id).expect("string write");
        writeln!(m, "relabeled={}", self.relabeled).expect("string write");
        writeln!(m, "obs_dim={obs}\nact_dim={act}\ngoal_dim={goal}").expect("string write");
        writeln!(m, "buffer_capacity={}", self.buffer.capacity()).expect("string write");
        writeln!(m, "seed={}", self.seed).expect("string write");
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, m).at_path(&path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).at_path(&path)?;
        let mut fields = std::collections::BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                what: "artifact manifest",
                detail: format!("line without '=': {line}"),
            })?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields.get(k).ok_or_else(|| Error::Format {
                what: "artifact manifest",
                detail: format!("missing key {k}"),
            })
        };
        let parse_err = |k: &str| Error::Format {
            what: "artifact manifest",
            detail: format!("bad value for {k}"),
        };
        let task_id: u32 = get("task_id")?.parse().map_err(|_| parse_err("task_id"))?;
        let relabeled: bool = get("relabeled")?.parse().map_err(|_| parse_err("relabeled"))?;
        let capacity: usize = get("buffer_capacity")?.parse().map_err(|_| parse_err("buffer_capacity"))?;
        let seed: u64 = get("seed")?.parse().map_err(|_| parse_err("seed"))?;
        let expert = load_weights(&dir.join(WEIGHTS_FILE))?;
        let buffer = load_buffer(&dir.join(BUFFER_FILE), capacity)?;
        let (obs, act, goal) = buffer.dims();
        for (k, v) in [("obs_dim", obs), ("act_dim", act), ("goal_dim", goal)] {
            if get(k)?.parse::<usize>().map_err(|_| parse_err(k))? != v {
                return Err(Error::Format {
                    what: "artifact manifest",
                    detail: format!("{k} disagrees with the buffer file"),
                });
            }
        }
        if expert.input_dim() != obs + goal || expert.output_dim() != act {
            return Err(Error::shape(format!("stored expert for task {task_id} does not match its buffer")));
        }
        let mut buffer = buffer;
        if relabeled {
            // stored actions are f32; recompute them at full precision
            buffer.relabel_actions(&expert)?;
        }
        Ok(Self {
            task_id,
            expert,
            buffer,
            relabeled,
            seed,
        })
    }
}

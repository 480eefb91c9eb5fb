use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::demo_rl::RlConfig;
use crate::distill::DistillConfig;
use crate::envsuite::{point_reach_4, GoalEncoding, TaskSpec};
use crate::error::{Error, PathContext, Result};
use crate::profile::Profile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GenDemos,
    TrainExpert,
    Distill,
    Lifelong,
    Eval,
    Report,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    PolytaskOffline,
    PolytaskOnline,
    Finetune,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::PolytaskOffline => "polytask-offline",
            Strategy::PolytaskOnline => "polytask-online",
            Strategy::Finetune => "finetune",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    /// Tasks in the order they are learned.
    pub tasks: Vec<TaskSpec>,
    pub demos_per_task: usize,
    /// Std of Gaussian noise on the scripted expert's demo actions.
    pub demo_noise: f64,
    pub eval_episodes: usize,
    /// Worker threads for per-task expert training; 0 uses every core.
    pub train_threads: usize,
}

/// A fully resolved experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub profile: Profile,
    pub out_dir: PathBuf,
    pub mode: Mode,
    pub strategy: Strategy,
    /// Also write the Sinkhorn cost/plan of the last scored episode.
    pub ot_debug_dump: bool,
    pub suite: SuiteConfig,
    pub rl: RlConfig,
    pub distill: DistillConfig,
}

/// Values given on the command line; they win over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub profile: Option<Profile>,
    pub out_dir: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub strategy: Option<Strategy>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSuite {
    preset: Option<String>,
    goal_encoding: Option<GoalEncoding>,
    tasks: Option<Vec<TaskSpec>>,
    demos_per_task: Option<usize>,
    demo_noise: Option<f64>,
    eval_episodes: Option<usize>,
    train_threads: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    profile: Option<Profile>,
    out_dir: Option<PathBuf>,
    mode: Option<Mode>,
    strategy: Option<Strategy>,
    ot_debug_dump: Option<bool>,
    suite: Option<RawSuite>,
    rl: Option<toml::Table>,
    distill: Option<toml::Table>,
}

/// Recursively lays `patch` over `base`.
fn merge(base: &mut toml::Table, patch: toml::Table) {
    for (k, v) in patch {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge(b, p),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn section<T: Serialize + for<'de> Deserialize<'de>>(name: &str, defaults: &T, patch: Option<toml::Table>) -> Result<T> {
    let Some(patch) = patch else {
        return Ok(serde_json::from_value(serde_json::to_value(defaults).expect("plain data serializes"))
            .expect("plain data round-trips"));
    };
    let mut base = toml::Table::try_from(defaults).map_err(|e| Error::Config(format!("[{name}]: {e}")))?;
    merge(&mut base, patch);
    T::deserialize(base).map_err(|e| Error::Config(format!("[{name}]: {e}")))
}

impl ExperimentConfig {
    /// Profile defaults for everything, with the given seed.
    pub fn defaults(profile: Profile, seed: u64) -> Self {
        Self {
            seed,
            profile,
            out_dir: PathBuf::from("runs"),
            mode: Mode::Lifelong,
            strategy: Strategy::PolytaskOffline,
            ot_debug_dump: false,
            suite: SuiteConfig {
                tasks: point_reach_4(GoalEncoding::GoalVector),
                demos_per_task: profile.demos_per_task(),
                demo_noise: 0.0,
                eval_episodes: profile.eval_episodes(),
                train_threads: 0,
            },
            rl: profile.rl_config(),
            distill: profile.distill_config(),
        }
    }

    /// Parses TOML text, fills unspecified values from the profile, applies
    /// overrides and validates. Unknown keys are rejected.
    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let profile = overrides.profile.or(raw.profile).unwrap_or_default();
        let seed = overrides
            .seed
            .or(raw.seed)
            .ok_or_else(|| Error::Config("missing required field `seed`".into()))?;
        let mut cfg = Self::defaults(profile, seed);
        if let Some(d) = overrides.out_dir.clone().or(raw.out_dir) {
            cfg.out_dir = d;
        }
        cfg.mode = overrides.mode.or(raw.mode).unwrap_or(cfg.mode);
        cfg.strategy = overrides.strategy.or(raw.strategy).unwrap_or(cfg.strategy);
        cfg.ot_debug_dump = raw.ot_debug_dump.unwrap_or(false);

        let suite = raw.suite.unwrap_or_default();
        cfg.suite.tasks = match (suite.tasks, suite.preset.as_deref()) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("suite: give either `preset` or `tasks`, not both".into()));
            }
            (Some(tasks), None) => tasks,
            (None, None | Some("point-reach-4")) => {
                point_reach_4(suite.goal_encoding.unwrap_or(GoalEncoding::GoalVector))
            }
            (None, Some(other)) => return Err(Error::Config(format!("suite.preset: unknown preset `{other}`"))),
        };
        if let Some(v) = suite.demos_per_task {
            cfg.suite.demos_per_task = v;
        }
        if let Some(v) = suite.demo_noise {
            cfg.suite.demo_noise = v;
        }
        if let Some(v) = suite.eval_episodes {
            cfg.suite.eval_episodes = v;
        }
        if let Some(v) = suite.train_threads {
            cfg.suite.train_threads = v;
        }
        cfg.rl = section("rl", &cfg.rl, raw.rl)?;
        cfg.distill = section("distill", &cfg.distill, raw.distill)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.suite.tasks.is_empty() {
            return Err(Error::Config("suite.tasks must not be empty".into()));
        }
        let goal_dim = self.suite.tasks[0].goal_dim();
        let mut ids = Vec::new();
        for t in &self.suite.tasks {
            t.validate().map_err(|e| Error::Config(format!("suite.tasks[{}]: {e}", t.task_id)))?;
            if t.goal_dim() != goal_dim {
                return Err(Error::Config("suite.tasks: every task needs the same goal encoding size".into()));
            }
            if ids.contains(&t.task_id) {
                return Err(Error::Config(format!("suite.tasks: duplicate task_id {}", t.task_id)));
            }
            ids.push(t.task_id);
        }
        if self.suite.demos_per_task == 0 {
            return Err(Error::Config("suite.demos_per_task must be positive".into()));
        }
        if !(self.suite.demo_noise >= 0.0) {
            return Err(Error::Config("suite.demo_noise must be nonnegative".into()));
        }
        if self.suite.eval_episodes == 0 {
            return Err(Error::Config("suite.eval_episodes must be positive".into()));
        }
        if i64::try_from(self.seed).is_err() {
            return Err(Error::Config("seed must fit in a signed 64-bit integer".into()));
        }
        self.rl.validate()?;
        self.distill.validate()
    }

    /// Complete TOML form; loading it back yields an equal config.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 prefix of everything that influences results (the output
    /// directory, mode and strategy are excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.mode = Mode::Lifelong;
        c.strategy = Strategy::PolytaskOffline;
        let text = c.to_toml_string().expect("validated config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `# config_hash=... seed=...`, the first line of every text output.
    pub fn provenance(&self) -> String {
        format!("config_hash={} seed={}", self.hash(), self.seed)
    }
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).at_path(path)?;
    ExperimentConfig::from_toml_str(&text, overrides).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_seed_is_rejected() {
        let err = ExperimentConfig::from_toml_str("profile = \"desk\"\n", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        let ok = ExperimentConfig::from_toml_str(
            "",
            &Overrides {
                seed: Some(3),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(ok.seed, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["seed = 1\nbogus = 2\n", "seed = 1\n[rl]\nlearning_rate = 0.1\n", "seed = 1\n[suite]\nx = 1\n"] {
            assert!(ExperimentConfig::from_toml_str(text, &Overrides::default()).is_err(), "{text}");
        }
    }

    #[test]
    fn partial_sections_keep_profile_defaults() {
        let cfg = ExperimentConfig::from_toml_str("seed = 1\n[rl]\nlambda = 0.5\n[rl.ot]\nscale = 3.0\n", &Overrides::default())
            .unwrap();
        let d = Profile::Desk.rl_config();
        assert_eq!(cfg.rl.lambda, 0.5);
        assert_eq!(cfg.rl.ot.scale, 3.0);
        assert_eq!(cfg.rl.ot.eps, d.ot.eps);
        assert_eq!(cfg.rl.lr, d.lr);
    }

    #[test]
    fn validation_names_the_field() {
        let err = ExperimentConfig::from_toml_str("seed = 1\n[rl]\ngamma = 1.5\n", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("rl.gamma"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_info() {
        let err = ExperimentConfig::from_toml_str("seed = 1\nprofile = = 2\n", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn round_trip_and_hash() {
        let cfg = ExperimentConfig::from_toml_str(
            "seed = 9\nprofile = \"paper\"\n[suite]\ngoal_encoding = { kind = \"one-hot\", size = 4 }\n",
            &Overrides::default(),
        )
        .unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text, &Overrides::default()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut moved = cfg.clone();
        moved.out_dir = PathBuf::from("elsewhere");
        assert_eq!(moved.hash(), cfg.hash());
        moved.seed = 10;
        assert_ne!(moved.hash(), cfg.hash());
    }
}

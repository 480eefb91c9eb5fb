use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, PathContext, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    /// Task added in this stage.
    pub learned_task: u32,
    /// Success per suite task; `None` for tasks not learned yet.
    pub success: Vec<Option<f64>>,
    pub effective_tasks: f64,
    pub wall_clock_s: f64,
}

/// Outcome of one lifelong run: success on every seen task after every stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub strategy: String,
    pub seed: u64,
    pub config_hash: String,
    pub task_ids: Vec<u32>,
    pub stages: Vec<StageRecord>,
}

impl BenchmarkReport {
    pub fn new(strategy: &str, seed: u64, config_hash: &str, task_ids: Vec<u32>) -> Self {
        Self {
            strategy: strategy.to_string(),
            seed,
            config_hash: config_hash.to_string(),
            task_ids,
            stages: Vec::new(),
        }
    }

    /// Appends the stage that learned task `stage`; `rates` covers the
    /// first `stage + 1` tasks.
    pub fn push_stage(&mut self, rates: &[f64], wall_clock_s: f64) -> Result<()> {
        let stage = self.stages.len();
        if stage >= self.task_ids.len() || rates.len() != stage + 1 {
            return Err(Error::invalid(format!(
                "stage {stage} needs {} success rates, got {}",
                stage + 1,
                rates.len()
            )));
        }
        let mut success = vec![None; self.task_ids.len()];
        for (s, r) in success.iter_mut().zip(rates) {
            *s = Some(*r);
        }
        self.stages.push(StageRecord {
            stage,
            learned_task: self.task_ids[stage],
            success,
            effective_tasks: rates.iter().sum(),
            wall_clock_s,
        });
        self.validate()
    }

    /// Stage × task success; entry `(i, j)` is set iff `j <= i`.
    pub fn forgetting_matrix(&self) -> Vec<Vec<Option<f64>>> {
        self.stages.iter().map(|s| s.success.clone()).collect()
    }

    pub fn effective_tasks_series(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.effective_tasks).collect()
    }

    pub fn final_effective_tasks(&self) -> f64 {
        self.stages.last().map_or(0.0, |s| s.effective_tasks)
    }

    /// Final-stage success of task `task_id`.
    pub fn final_success(&self, task_id: u32) -> Option<f64> {
        let j = self.task_ids.iter().position(|t| *t == task_id)?;
        self.stages.last()?.success[j]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.stages.iter().enumerate() {
            if s.success.len() != self.task_ids.len() {
                return Err(Error::invalid(format!("stage {i} has a wrong-sized success row")));
            }
            for (j, v) in s.success.iter().enumerate() {
                match v {
                    Some(r) if j <= i && (0.0..=1.0).contains(r) => {}
                    None if j > i => {}
                    _ => {
                        return Err(Error::invalid(format!(
                            "stage {i}, task {j}: entry must be a rate in [0, 1] iff the task has been learned"
                        )))
                    }
                }
            }
            let sum: f64 = s.success.iter().flatten().sum();
            if (sum - s.effective_tasks).abs() > 1e-12 {
                return Err(Error::invalid(format!("stage {i}: effective tasks != sum of success")));
            }
        }
        Ok(())
    }

    pub fn provenance(&self) -> String {
        format!("config_hash={} seed={}", self.config_hash, self.seed)
    }

    /// `stages.csv`: provenance comment, header, one row per stage.
    pub fn stages_csv(&self) -> String {
        let mut out = format!("# {}\nstage,learned_task", self.provenance());
        for t in &self.task_ids {
            write!(out, ",task_{t}").expect("string write");
        }
        out.push_str(",effective_tasks\n");
        for s in &self.stages {
            write!(out, "{},{}", s.stage, s.learned_task).expect("string write");
            for v in &s.success {
                match v {
                    Some(r) => write!(out, ",{r}").expect("string write"),
                    None => out.push(','),
                }
            }
            writeln!(out, ",{}", s.effective_tasks).expect("string write");
        }
        out
    }
}

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

fn svg_open(title: &str, provenance: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <!-- {provenance} -->\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
        W / 2.0
    )
}

/// Axes with y ticks at 0, ymax/2, ymax and x labels for each stage.
fn axes(out: &mut String, stages: usize, ymax: f64, ylabel: &str) {
    let (x0, y0, x1, y1) = (PAD, H - PAD, W - PAD / 2.0, PAD);
    writeln!(
        out,
        "<path d=\"M{x0},{y1} L{x0},{y0} L{x1},{y0}\" stroke=\"black\" fill=\"none\"/>\n\
         <text x=\"14\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{ylabel}</text>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">stage</text>",
        H / 2.0,
        H / 2.0,
        (x0 + x1) / 2.0,
        H - 10.0
    )
    .expect("string write");
    for k in 0..=2 {
        let v = ymax * k as f64 / 2.0;
        let y = y0 - (y0 - y1) * k as f64 / 2.0;
        writeln!(
            out,
            "<text x=\"{}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{v}</text>",
            x0 - 4.0,
            y + 3.0
        )
        .expect("string write");
    }
    for s in 0..stages {
        writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{s}</text>",
            stage_x(s, stages),
            y0 + 14.0
        )
        .expect("string write");
    }
}

fn stage_x(s: usize, stages: usize) -> f64 {
    let (x0, x1) = (PAD + 16.0, W - PAD / 2.0 - 16.0);
    if stages <= 1 {
        (x0 + x1) / 2.0
    } else {
        x0 + (x1 - x0) * s as f64 / (stages - 1) as f64
    }
}

fn value_y(v: f64, ymax: f64) -> f64 {
    let (y0, y1) = (H - PAD, PAD);
    y0 - (y0 - y1) * (v / ymax).clamp(0.0, 1.0)
}

/// Success of one task against stage, from the stage it was learned.
pub fn task_svg(report: &BenchmarkReport, task_index: usize) -> String {
    let task = report.task_ids[task_index];
    let n = report.stages.len();
    let mut out = svg_open(&format!("{}: task {task} success", report.strategy), &report.provenance());
    axes(&mut out, n, 1.0, "success rate");
    let points: Vec<(f64, f64)> = report
        .stages
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.success[task_index].map(|v| (stage_x(i, n), value_y(v, 1.0))))
        .collect();
    if !points.is_empty() {
        let path: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>",
            path.join(" ")
        )
        .expect("string write");
        for (x, y) in &points {
            writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"steelblue\"/>").expect("string write");
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Effective number of tasks per stage as bars.
pub fn effective_tasks_svg(report: &BenchmarkReport) -> String {
    let n = report.stages.len();
    let ymax = report.task_ids.len().max(1) as f64;
    let mut out = svg_open(&format!("{}: effective tasks", report.strategy), &report.provenance());
    axes(&mut out, n, ymax, "effective tasks");
    let width = ((W - 1.5 * PAD) / n.max(1) as f64 * 0.5).min(40.0);
    for (i, s) in report.stages.iter().enumerate() {
        let x = stage_x(i, n) - width / 2.0;
        let y = value_y(s.effective_tasks, ymax);
        writeln!(
            out,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{width:.2}\" height=\"{:.2}\" fill=\"darkorange\"/>",
            (H - PAD) - y
        )
        .expect("string write");
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `report.json`, `stages.csv`, one `task_<id>.svg` per task and
/// `effective_tasks.svg` (no charts for an empty task list). Returns the
/// paths written.
pub fn emit_report(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>> {
    report.validate()?;
    fs::create_dir_all(dir).at_path(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).at_path(&path)?;
        written.push(path);
        Ok(())
    };
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::invalid(e.to_string()))?;
    put("report.json".into(), json + "\n")?;
    put("stages.csv".into(), report.stages_csv())?;
    if !report.task_ids.is_empty() {
        for (j, t) in report.task_ids.iter().enumerate() {
            put(format!("task_{t}.svg"), task_svg(report, j))?;
        }
        put("effective_tasks.svg".into(), effective_tasks_svg(report))?;
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<BenchmarkReport> {
    let text = fs::read_to_string(path).at_path(path)?;
    let report: BenchmarkReport = serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "report file",
        detail: e.to_string(),
    })?;
    report.validate()?;
    Ok(report)
}

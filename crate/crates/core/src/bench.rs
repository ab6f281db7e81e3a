//! Mode detection, recovery metrics and the replicated-run harness.

use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mixture::Point;
use crate::objectives::{ModeSpec, Problem};
use crate::optimizers::{run, EvalCounts, RunConfig, Trace};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// When a final mean counts as having found a mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectionRule {
    /// Some mean lies in the closed box `mode +- epsilon` in every coordinate.
    Box { epsilon: f64 },
    /// The mean's nearest listed mode is this one and its score is within
    /// `epsilon` of the mode's value.
    ValueGap { epsilon: f64 },
}

impl DetectionRule {
    pub fn epsilon(&self) -> f64 {
        match *self {
            Self::Box { epsilon } | Self::ValueGap { epsilon } => epsilon,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.epsilon() > 0.0 {
            Ok(())
        } else {
            Err(BenchError::Config("epsilon must be positive".into()))
        }
    }
}

/// `true` if some mean lies within `epsilon` of `mode` in every coordinate.
pub fn mode_found(means: &[Point], mode: &Point, epsilon: f64) -> bool {
    means
        .iter()
        .any(|m| m.iter().zip(mode.iter()).all(|(a, b)| (a - b).abs() <= epsilon))
}

/// Indices of the listed modes found by `means`, ascending and without repeats.
pub fn found_modes(problem: &Problem, means: &[Point], rule: &DetectionRule) -> Vec<usize> {
    let mut found = match *rule {
        DetectionRule::Box { epsilon } => problem
            .modes
            .iter()
            .enumerate()
            .filter(|(_, m)| mode_found(means, &m.location, epsilon))
            .map(|(j, _)| j)
            .collect::<Vec<_>>(),
        DetectionRule::ValueGap { epsilon } => means
            .iter()
            .filter_map(|x| {
                let (j, mode) = nearest_mode(&problem.modes, x)?;
                (problem.score(x) >= mode.value - epsilon).then_some(j)
            })
            .collect(),
    };
    found.sort_unstable();
    found.dedup();
    found
}

fn nearest_mode<'a>(modes: &'a [ModeSpec], x: &Point) -> Option<(usize, &'a ModeSpec)> {
    modes
        .iter()
        .enumerate()
        .min_by(|a, b| (&a.1.location - x).norm_squared().total_cmp(&(&b.1.location - x).norm_squared()))
}

/// Recovery metrics over `H` replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Global peak ratio: found global modes over `I H`.
    pub gpr: f64,
    /// All-peak ratio: found modes over `J H`.
    pub apr: f64,
    /// Global success rate: fraction of runs finding every global mode.
    pub gsr: f64,
    pub h: usize,
    pub n_global: usize,
    pub n_modes: usize,
    /// Found mode indices per run.
    pub found: Vec<Vec<usize>>,
    /// Total objective calls over all runs.
    pub counts: EvalCounts,
    /// Diagnostics of runs that aborted; they count as finding nothing.
    pub failures: Vec<(usize, String)>,
}

/// GPR, APR and GSR from per-run found sets. `is_global[j]` flags mode `j`.
pub fn compute_metrics(found: &[Vec<usize>], is_global: &[bool]) -> Result<MetricsReport, BenchError> {
    let h = found.len();
    if h == 0 {
        return Err(BenchError::Config("at least one replicate is required".into()));
    }
    let n_global = is_global.iter().filter(|g| **g).count();
    if n_global == 0 {
        return Err(BenchError::Config("the problem lists no global mode".into()));
    }
    let n_modes = is_global.len();
    let mut gf_total = 0usize;
    let mut af_total = 0usize;
    let mut successes = 0usize;
    for set in found {
        let gf = set.iter().filter(|&&j| is_global[j]).count();
        gf_total += gf;
        af_total += set.len();
        if gf == n_global {
            successes += 1;
        }
    }
    Ok(MetricsReport {
        gpr: gf_total as f64 / (n_global * h) as f64,
        apr: af_total as f64 / (n_modes * h) as f64,
        gsr: successes as f64 / h as f64,
        h,
        n_global,
        n_modes,
        found: found.to_vec(),
        counts: EvalCounts::default(),
        failures: Vec::new(),
    })
}

/// One replicate of a benchmark.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub replicate: usize,
    pub trace: Result<Trace, String>,
    pub found: Vec<usize>,
}

/// Output of [`run_benchmark`].
#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub report: MetricsReport,
    pub runs: Vec<RunRecord>,
}

/// Runs `h` replicates of `cfg` on `problem` with `jobs` worker threads
/// (0 = all cores). Replicate `r` uses `cfg.seed` with replicate index `r`.
pub fn run_benchmark(
    problem: &Problem,
    cfg: &RunConfig,
    h: usize,
    rule: &DetectionRule,
    jobs: usize,
) -> Result<BenchOutcome, BenchError> {
    rule.validate()?;
    if h == 0 {
        return Err(BenchError::Config("at least one replicate is required".into()));
    }
    let objective: Arc<_> = problem.objective.clone();
    let one = |r: usize| {
        let cfg = RunConfig {
            replicate: r as u64,
            ..cfg.clone()
        };
        let trace = run(&objective, &cfg).map_err(|e| e.to_string());
        let found = match &trace {
            Ok(t) => found_modes(problem, &t.final_means, rule),
            Err(_) => Vec::new(),
        };
        RunRecord {
            replicate: r,
            trace,
            found,
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let runs: Vec<RunRecord> = pool.install(|| (0..h).into_par_iter().map(one).collect());
    let found: Vec<Vec<usize>> = runs.iter().map(|r| r.found.clone()).collect();
    let is_global: Vec<bool> = problem.modes.iter().map(|m| m.is_global).collect();
    let mut report = compute_metrics(&found, &is_global)?;
    for r in &runs {
        match &r.trace {
            Ok(t) => report.counts = report.counts + t.counts,
            Err(e) => report.failures.push((r.replicate, e.clone())),
        }
    }
    Ok(BenchOutcome { report, runs })
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub algorithm: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub epsilon: f64,
    pub gpr: f64,
    pub apr: f64,
    pub gsr: f64,
    pub feval_l: u64,
    pub feval_grad: u64,
    pub feval_hess: u64,
    pub seed: u64,
}

impl SummaryRow {
    pub fn new(experiment: &str, cfg: &RunConfig, rule: &DetectionRule, report: &MetricsReport) -> Self {
        Self {
            experiment: experiment.to_string(),
            algorithm: cfg.algorithm.name().to_string(),
            k: cfg.k,
            b: cfg.b,
            t: cfg.t,
            h: report.h,
            epsilon: rule.epsilon(),
            gpr: report.gpr,
            apr: report.apr,
            gsr: report.gsr,
            feval_l: report.counts.value,
            feval_grad: report.counts.gradient,
            feval_hess: report.counts.hessian,
            seed: cfg.seed,
        }
    }
}

/// Writes `summary.csv` rows.
pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `summary.csv` rows.
pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, BenchError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<SummaryRow>, _>>()?;
    Ok(rows)
}

/// Writes one `run-<h>.jsonl` per replicate under `dir`, with a `-K<k>` suffix when `tag` is given.
pub fn write_traces(dir: &Path, runs: &[RunRecord], tag: Option<&str>) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    for r in runs {
        let name = match tag {
            Some(t) => format!("run-{}-{t}.jsonl", r.replicate),
            None => format!("run-{}.jsonl", r.replicate),
        };
        let body = match &r.trace {
            Ok(t) => t.to_jsonl(),
            Err(e) => format!("{}\n", serde_json::json!({ "error": e })),
        };
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Long-format weight and mean trajectories of every run: one row per
/// `(replicate, t, component)`.
pub fn write_trajectories(path: &Path, runs: &[RunRecord]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    let d = runs
        .iter()
        .find_map(|r| r.trace.as_ref().ok()?.snapshots.first().map(|s| s.means[0].len()))
        .unwrap_or(0);
    let mut header = vec!["replicate".to_string(), "t".into(), "omega".into(), "component".into(), "weight".into()];
    header.extend((0..d).map(|i| format!("mean_{i}")));
    w.write_record(&header)?;
    for r in runs {
        let Ok(trace) = &r.trace else { continue };
        for s in &trace.snapshots {
            for (k, (wk, m)) in s.weights.iter().zip(&s.means).enumerate() {
                let mut row = vec![r.replicate.to_string(), s.t.to_string(), s.omega.to_string(), k.to_string(), wk.to_string()];
                row.extend(m.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

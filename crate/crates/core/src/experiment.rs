//! Declarative experiment files, the problem registry and built-in presets.
//!
//! An experiment is a TOML document:
//!
//! ```toml
//! problem = "sym-gmm"
//! algorithm = "fs-nva-gm"
//! K = 3
//! B = 16
//! T = 5000
//! omega1 = 1.0
//! alpha = 1.0
//! rho1 = 0.1
//! beta = 0.8
//! utilities = { kind = "cmaes", B0 = 4 }
//! init = { means = { uniform-box = [-2.0, 2.0] } }
//! replicates = 100
//! ```
//!
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::DetectionRule;
use crate::estimation::{MuVariant, SVariant, UtilitySpec};
use crate::mixture::{MixtureState, Point};
use crate::objectives::{
    cec_problem, make_asymmetric_gmm, make_degenerate_psi, make_styblinski_tang, make_symmetric_gmm, mode_at,
    refine_mode, CecFunction, Domain, GmmObjective, Problem,
};
use crate::optimizers::{Algorithm, FsStep, MeansInit, PrecisionRule, RunConfig, Schedule, DEFAULT_PD_MARGIN};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Initial means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeansConfig {
    /// Uniform in `[lo, hi]^d`.
    UniformBox([f64; 2]),
    /// One row per component.
    Explicit(Vec<Vec<f64>>),
    /// Uniform in the problem's own rectangle.
    Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub means: MeansConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionKind {
    Box,
    ValueGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "K")]
    pub k: Vec<usize>,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

fn default_sigma0() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_one() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

fn default_pd_margin() -> f64 {
    DEFAULT_PD_MARGIN
}

fn is_default_pd_margin(v: &f64) -> bool {
    *v == DEFAULT_PD_MARGIN
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

/// An experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment id used for the output directory; defaults to the file stem or preset name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub problem: String,
    pub algorithm: Algorithm,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub omega1: f64,
    pub alpha: f64,
    pub rho1: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub kappa: usize,
    #[serde(default, skip_serializing_if = "is_default")]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_variant: Option<MuVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_variant: Option<SVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilities: Option<UtilitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitConfig>,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Defaults to `value-gap` for the niching benchmark and `box` elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionKind>,
    #[serde(default = "default_one")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub precision_update: PrecisionRule,
    #[serde(default = "default_pd_margin", skip_serializing_if = "is_default_pd_margin")]
    pub pd_margin: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub fs_step: FsStep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_max: Option<f64>,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_omega: Option<f64>,
    #[serde(default = "default_one", skip_serializing_if = "is_one")]
    pub snapshot_every: usize,
    /// Write per-iteration weight and mean trajectories as CSV.
    #[serde(default, skip_serializing_if = "is_default")]
    pub trajectories: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&s)?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment serializes")
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.problem)
    }

    /// Range checks that the schema cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.b == 0 {
            return bad("B must be at least 1".into());
        }
        if self.t == 0 {
            return bad("T must be at least 1".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive".into());
        }
        if !(self.sigma0 > 0.0) {
            return bad("sigma0 must be positive".into());
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.pd_margin) {
            return bad("pd_margin must lie in [0, 1)".into());
        }
        self.schedule().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.algorithm == Algorithm::FsNvaGm && self.utilities.is_none() {
            return bad("fs-nva-gm needs `utilities`".into());
        }
        if let Some(u) = &self.utilities {
            u.build(self.b).map_err(|e| ConfigError::Invalid(format!("utilities: {e}")))?;
        }
        if self.algorithm == Algorithm::Snga && self.fixed_omega.is_none() {
            return bad("snga needs `fixed_omega`".into());
        }
        if let Some(InitConfig {
            means: MeansConfig::UniformBox([lo, hi]),
        }) = &self.init
        {
            if !(lo < hi) {
                return bad(format!("init box [{lo}, {hi}] is empty"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.k.is_empty() || s.k.contains(&0) {
                return bad("sweep.K must list positive values".into());
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            omega1: self.omega1,
            alpha: self.alpha,
            rho1: self.rho1,
            beta: self.beta,
            kappa: self.kappa,
            tau: self.tau,
            rho_max: self.rho_max,
        }
    }

    /// The values of `K` to run: the sweep if present, else `K`.
    pub fn k_values(&self) -> Vec<usize> {
        self.sweep.as_ref().map(|s| s.k.clone()).unwrap_or_else(|| vec![self.k])
    }

    pub fn detection_rule(&self, problem: &Problem) -> DetectionRule {
        let kind = self.detection.unwrap_or(if problem.id.starts_with("cec-") {
            DetectionKind::ValueGap
        } else {
            DetectionKind::Box
        });
        match kind {
            DetectionKind::Box => DetectionRule::Box { epsilon: self.epsilon },
            DetectionKind::ValueGap => DetectionRule::ValueGap { epsilon: self.epsilon },
        }
    }

    /// Run configuration for `problem` with `k` components.
    pub fn run_config(&self, problem: &Problem, k: usize) -> Result<RunConfig, ConfigError> {
        let d = problem.dim();
        let means = match self.init.as_ref().map(|i| &i.means).unwrap_or(&MeansConfig::Domain) {
            MeansConfig::UniformBox([lo, hi]) => MeansInit::UniformBox(Domain::cube(d, *lo, *hi)),
            MeansConfig::Explicit(rows) => {
                if rows.len() != k || rows.iter().any(|r| r.len() != d) {
                    return Err(ConfigError::Invalid(format!("init.means.explicit needs {k} rows of length {d}")));
                }
                MeansInit::Explicit(rows.iter().map(|r| Point::from_row_slice(r)).collect())
            }
            MeansConfig::Domain => MeansInit::UniformBox(
                problem.domain.clone().unwrap_or_else(|| Domain::cube(d, -2.0, 2.0)),
            ),
        };
        Ok(RunConfig {
            algorithm: self.algorithm,
            k,
            b: self.b,
            t: self.t,
            schedule: self.schedule(),
            mu_variant: self.mu_variant,
            s_variant: self.s_variant,
            utilities: self.utilities,
            means,
            sigma0: self.sigma0,
            precision_rule: self.precision_update,
            pd_margin: self.pd_margin,
            fs_step: self.fs_step,
            fallback: self.fallback,
            fixed_omega: self.fixed_omega,
            seed: self.seed,
            replicate: 0,
            snapshot_every: self.snapshot_every,
        })
    }
}

/// Registry entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInfo {
    pub id: &'static str,
    pub dim: usize,
    pub n_global: usize,
    pub n_modes: usize,
    pub preset: &'static str,
}

/// Ids accepted by [`resolve_problem`], besides `gmm-file:<path>`.
pub const PROBLEM_IDS: [&str; 10] = [
    "sym-gmm",
    "asym-gmm",
    "styblinski-tang-4",
    "degenerate-psi",
    "cec-f1",
    "cec-f2",
    "cec-f3",
    "cec-f4",
    "cec-f5",
    "cec-f6",
];

fn default_preset(id: &str) -> &'static str {
    match id {
        "sym-gmm" => "fig-mode-sym",
        "asym-gmm" => "fig-weight-asym",
        "styblinski-tang-4" => "fig-mode-st",
        "degenerate-psi" => "fig-weight-degen",
        "cec-f1" => "cec-f1",
        "cec-f2" => "cec-f2",
        "cec-f3" => "cec-f3",
        "cec-f4" => "cec-f4",
        "cec-f5" => "cec-f5",
        "cec-f6" => "cec-f6",
        _ => "",
    }
}

/// Builds a problem from its registry id.
pub fn resolve_problem(id: &str) -> Result<Problem, ConfigError> {
    if let Some(path) = id.strip_prefix("gmm-file:") {
        return load_gmm_problem(Path::new(path), id);
    }
    Ok(match id {
        "sym-gmm" => make_symmetric_gmm(),
        "asym-gmm" => make_asymmetric_gmm(),
        "degenerate-psi" => make_degenerate_psi(),
        _ => {
            if let Some(d) = id.strip_prefix("styblinski-tang-").and_then(|d| d.parse::<usize>().ok()) {
                if (1..=12).contains(&d) {
                    return Ok(make_styblinski_tang(d));
                }
            }
            let f = id
                .strip_prefix("cec-f")
                .and_then(|i| i.parse::<usize>().ok())
                .and_then(CecFunction::from_index)
                .ok_or_else(|| ConfigError::UnknownProblem(id.to_string()))?;
            cec_problem(f)
        }
    })
}

/// A mixture log-density read from the mixture JSON format. Modes are found
/// by local ascent from each component mean; the highest are global.
fn load_gmm_problem(path: &Path, id: &str) -> Result<Problem, ConfigError> {
    let s = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mixture = MixtureState::from_json(&s).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
    let gmm = GmmObjective { mixture };
    let mut locs: Vec<Point> = Vec::new();
    for m in gmm.mixture.means() {
        if let Ok(x) = refine_mode(&gmm, &m) {
            let is_max = crate::mixture::is_positive_definite(&-gmm.mixture.log_pdf_derivatives(&x, 2).hessian.expect("order 2"));
            if is_max && !locs.iter().any(|l| (l - &x).norm() < 1e-6) {
                locs.push(x);
            }
        }
    }
    let values: Vec<f64> = locs.iter().map(|x| gmm.mixture.log_pdf(x)).collect();
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let modes = locs
        .into_iter()
        .zip(&values)
        .map(|(x, v)| mode_at(&gmm, x, *v > best - 1e-9))
        .collect();
    Ok(Problem::new(id, std::sync::Arc::new(gmm), modes))
}

/// Registry listing with dimensions and mode counts.
pub fn list_problems() -> Vec<ProblemInfo> {
    PROBLEM_IDS
        .iter()
        .map(|id| {
            let p = resolve_problem(id).expect("registered ids resolve");
            ProblemInfo {
                id,
                dim: p.dim(),
                n_global: p.n_global(),
                n_modes: p.n_modes(),
                preset: default_preset(id),
            }
        })
        .collect()
}

const PRESETS: &[(&str, &str)] = &[
    (
        "sym-gmm",
        r#"
problem = "sym-gmm"
algorithm = "nva-gm"
K = 4
B = 4
T = 5000
omega1 = 1.0
alpha = 1.0
rho1 = 0.1
beta = 0.8
mu_variant = 1
s_variant = 2
init = { means = { uniform-box = [-2.0, 2.0] } }
snapshot_every = 100
"#,
    ),
    (
        "fig-mode-sym",
        r#"
problem = "sym-gmm"
algorithm = "fs-nva-gm"
K = 3
B = 16
T = 5000
omega1 = 1.0
alpha = 1.0
rho1 = 0.1
beta = 0.8
utilities = { kind = "cmaes", B0 = 4 }
init = { means = { uniform-box = [-2.0, 2.0] } }
epsilon = 0.1
replicates = 100
snapshot_every = 5000
sweep = { K = [2, 3, 4, 5] }
fs_step = "rho-omega"
"#,
    ),
    (
        "fig-mode-sym-nva",
        r#"
problem = "sym-gmm"
algorithm = "nva-gm"
K = 3
B = 4
T = 5000
omega1 = 1.0
alpha = 1.0
rho1 = 0.1
beta = 0.8
mu_variant = 1
s_variant = 2
init = { means = { uniform-box = [-2.0, 2.0] } }
epsilon = 0.1
replicates = 100
snapshot_every = 5000
sweep = { K = [2, 3, 4, 5] }
"#,
    ),
    (
        "fig-mode-sym-pcmaes",
        r#"
problem = "sym-gmm"
algorithm = "pcmaes"
K = 3
B = 16
T = 5000
omega1 = 1.0
alpha = 1.0
rho1 = 0.1
beta = 0.8
utilities = { kind = "cmaes", B0 = 4 }
init = { means = { uniform-box = [-2.0, 2.0] } }
epsilon = 0.1
replicates = 100
snapshot_every = 5000
sweep = { K = [2, 3, 4, 5] }
"#,
    ),
    (
        "fig-mode-sym-psga",
        r#"
problem = "sym-gmm"
algorithm = "psga"
K = 3
B = 1
T = 10000
omega1 = 1.0
alpha = 1.0
rho1 = 0.1
beta = 0.8
init = { means = { uniform-box = [-2.0, 2.0] } }
epsilon = 0.1
replicates = 100
snapshot_every = 10000
sweep = { K = [2, 3, 4, 5] }
"#,
    ),
    (
        "fig-weight-sym",
        r#"
problem = "sym-gmm"
algorithm = "nva-gm"
K = 4
B = 4
T = 10000
omega1 = 1.0
alpha = 1.0
rho1 = 0.1
beta = 0.8
mu_variant = 1
s_variant = 2
init = { means = { uniform-box = [-2.0, 2.0] } }
epsilon = 0.1
replicates = 10
snapshot_every = 10
trajectories = true
"#,
    ),
    (
        "fig-weight-asym",
        r#"
problem = "asym-gmm"
algorithm = "nva-gm"
K = 3
B = 4
T = 1000
omega1 = 100.0
alpha = 1.0
rho1 = 0.001
beta = 0.8
mu_variant = 1
s_variant = 2
init = { means = { uniform-box = [-2.0, 2.0] } }
epsilon = 0.1
replicates = 10
snapshot_every = 1
trajectories = true
"#,
    ),
    (
        "fig-mode-st",
        r#"
problem = "styblinski-tang-4"
algorithm = "nva-gm"
K = 16
B = 4
T = 200
omega1 = 40000.0
alpha = 2.0
rho1 = 0.0001
beta = 0.5
mu_variant = 1
s_variant = 2
init = { means = { uniform-box = [-4.0, 4.0] } }
epsilon = 0.1
replicates = 100
snapshot_every = 200
sweep = { K = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20] }
precision_update = "iblr"
"#,
    ),
    (
        "fig-mode-st-fs",
        r#"
problem = "styblinski-tang-4"
algorithm = "fs-nva-gm"
K = 16
B = 16
T = 200
omega1 = 40000.0
alpha = 2.0
rho1 = 0.0001
beta = 0.5
utilities = { kind = "cmaes", B0 = 4 }
init = { means = { uniform-box = [-4.0, 4.0] } }
epsilon = 0.1
replicates = 100
snapshot_every = 200
sweep = { K = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20] }
fs_step = "rho-omega"
"#,
    ),
    (
        "fig-weight-degen",
        r#"
problem = "degenerate-psi"
algorithm = "nva-gm"
K = 2
B = 4
T = 50
omega1 = 0.1
alpha = 2.0
rho1 = 0.1
beta = 0.8
mu_variant = 1
s_variant = 2
init = { means = { explicit = [[-4.0, 0.5], [4.0, -0.5]] } }
epsilon = 0.1
replicates = 10
trajectories = true
"#,
    ),
    (
        "cec-f1",
        r#"
problem = "cec-f1"
algorithm = "fs-nva-gm"
K = 2
B = 16
T = 500
omega1 = 100000.0
alpha = 2.0
rho1 = 0.001
beta = 0.8
tau = 1e-10
utilities = { kind = "cmaes", B0 = 4 }
sigma0 = 15.0
epsilon = 0.1
replicates = 50
snapshot_every = 500
rho_max = 1.0
"#,
    ),
    (
        "cec-f2",
        r#"
problem = "cec-f2"
algorithm = "fs-nva-gm"
K = 5
B = 32
T = 2000
omega1 = 20.0
alpha = 1.0
rho1 = 0.001
beta = 0.9
tau = 1e-10
utilities = { kind = "cmaes", B0 = 8 }
sigma0 = 0.5
epsilon = 0.1
replicates = 50
snapshot_every = 2000
rho_max = 1.0
"#,
    ),
    (
        "cec-f3",
        r#"
problem = "cec-f3"
algorithm = "fs-nva-gm"
K = 1
B = 32
T = 2000
omega1 = 20.0
alpha = 1.0
rho1 = 0.001
beta = 0.9
tau = 1e-10
utilities = { kind = "cmaes", B0 = 8 }
sigma0 = 0.5
epsilon = 0.1
replicates = 50
snapshot_every = 2000
rho_max = 1.0
"#,
    ),
    (
        "cec-f4",
        r#"
problem = "cec-f4"
algorithm = "fs-nva-gm"
K = 4
B = 16
T = 2000
omega1 = 2000000.0
alpha = 1.8
rho1 = 0.0001
beta = 0.7
kappa = 50
tau = 1e-10
utilities = { kind = "cmaes", B0 = 4 }
sigma0 = 6.0
epsilon = 0.1
replicates = 50
snapshot_every = 2000
rho_max = 1.0
"#,
    ),
    (
        "cec-f5",
        r#"
problem = "cec-f5"
algorithm = "fs-nva-gm"
K = 2
B = 16
T = 2000
omega1 = 10000.0
alpha = 2.0
rho1 = 0.00001
beta = 0.8
tau = 1e-10
utilities = { kind = "cmaes", B0 = 4 }
sigma0 = 1.9
epsilon = 0.1
replicates = 50
snapshot_every = 2000
rho_max = 1.0
"#,
    ),
    (
        "cec-f6",
        r#"
problem = "cec-f6"
algorithm = "fs-nva-gm"
K = 18
B = 16
T = 2000
omega1 = 1000000.0
alpha = 1.8
rho1 = 0.00001
beta = 0.8
kappa = 50
tau = 1e-10
utilities = { kind = "cmaes", B0 = 4 }
sigma0 = 10.0
epsilon = 0.1
replicates = 50
snapshot_every = 2000
rho_max = 1.0
"#,
    ),
];

/// Names of the built-in presets.
pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// A built-in preset by name.
pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let (_, body) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
    let mut cfg = ExperimentConfig::from_toml(body)?;
    cfg.name = Some(name.to_string());
    Ok(cfg)
}

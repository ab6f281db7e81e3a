//! Schedules and iteration loops.
//!
//! [`run`] dispatches a [`RunConfig`] to one of the mixture optimizers
//! (annealed, fitness-shaped or fixed-temperature) or to one of the two
//! parallel baselines, and records a [`Trace`].

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{
    fs_from_values, grad_mu_from_evals, grad_pi_from_values, grad_prec_from_evals, AnnealedPotential, EstimationError,
    MuVariant, PotentialEval, SVariant, UtilityScheme, UtilitySpec,
};
use crate::mixture::{cholesky_lower, symmetrize, GaussianComponent, MixtureError, MixtureState, Point};
use crate::objectives::{Domain, Objective, Tier, WithFallback};

/// Largest number of step halvings tried when a precision update leaves the cone.
pub const MAX_HALVINGS: u32 = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error(
        "precision of component {component} left the positive-definite cone at iteration {t} \
         after {MAX_HALVINGS} step halvings; the learning rate is too large"
    )]
    PdGuardExhausted { t: usize, component: usize },
    #[error("non-finite {what} at iteration {t}")]
    NonFinite { t: usize, what: &'static str },
}

/// Temperature and step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub omega1: f64,
    pub alpha: f64,
    pub rho1: f64,
    pub beta: f64,
    /// Burn-in: precisions are frozen for `t <= kappa`.
    pub kappa: usize,
    /// Covariance eigenvalue floor, 0 to disable.
    pub tau: f64,
    /// Upper bound on `rho_t`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_max: Option<f64>,
}

impl Schedule {
    /// `omega1 t^-alpha`, for `t >= 1`.
    pub fn omega(&self, t: usize) -> f64 {
        self.omega1 * (t as f64).powf(-self.alpha)
    }

    /// `rho1 (omega1 / omega_t)^beta`, capped at `rho_max`.
    pub fn rho(&self, t: usize) -> f64 {
        let r = self.rho1 * (self.omega1 / self.omega(t)).powf(self.beta);
        self.rho_max.map_or(r, |m| r.min(m))
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::Config(m.to_string()));
        if !(self.omega1 > 0.0 && self.omega1.is_finite()) {
            return bad("omega1 must be positive");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if !(self.rho1 >= 0.0 && self.rho1.is_finite()) {
            return bad("rho1 must be non-negative");
        }
        if !(self.beta >= 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in [0, 1]");
        }
        if !(self.tau >= 0.0) {
            return bad("tau must be non-negative");
        }
        if self.rho_max.is_some_and(|m| !(m > 0.0)) {
            return bad("rho_max must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    NvaGm,
    FsNvaGm,
    Snga,
    Psga,
    Pcmaes,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::NvaGm => "nva-gm",
            Self::FsNvaGm => "fs-nva-gm",
            Self::Snga => "snga",
            Self::Psga => "psga",
            Self::Pcmaes => "pcmaes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionRule {
    #[default]
    Ngd,
    Iblr,
}

/// Step size of the fitness-shaped mean and precision updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FsStep {
    /// `rho_t`.
    #[default]
    Rho,
    /// `rho_t omega_t`. Utilities carry no temperature scale, so this gives
    /// the shaped updates the same `rho_t omega_t` contraction the unshaped
    /// precision update gets from its entropy term.
    RhoOmega,
}

/// Default for [`RunConfig::pd_margin`].
pub const DEFAULT_PD_MARGIN: f64 = 0.5;

/// How initial means are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum MeansInit {
    UniformBox(Domain),
    Explicit(Vec<Point>),
}

/// Everything a single run needs besides the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub b: usize,
    pub t: usize,
    pub schedule: Schedule,
    /// `None` picks the highest variant the objective tier supports.
    pub mu_variant: Option<MuVariant>,
    pub s_variant: Option<SVariant>,
    pub utilities: Option<UtilitySpec>,
    pub means: MeansInit,
    pub sigma0: f64,
    pub precision_rule: PrecisionRule,
    /// The step-halving guard accepts an NGD precision `S'` only when
    /// `S' - pd_margin S` is positive definite; 0 accepts any PD matrix.
    pub pd_margin: f64,
    pub fs_step: FsStep,
    /// Difference missing derivatives instead of failing.
    pub fallback: bool,
    /// Constant temperature for [`Algorithm::Snga`].
    pub fixed_omega: Option<f64>,
    pub seed: u64,
    pub replicate: u64,
    /// Snapshot period; the last iteration is always recorded.
    pub snapshot_every: usize,
}

impl RunConfig {
    /// A configuration with the given sizes and schedule, uniform means in
    /// `[-2, 2]^d`, unit initial covariance and every other option at its default.
    pub fn new(algorithm: Algorithm, k: usize, b: usize, t: usize, schedule: Schedule, d: usize) -> Self {
        Self {
            algorithm,
            k,
            b,
            t,
            schedule,
            mu_variant: None,
            s_variant: None,
            utilities: None,
            means: MeansInit::UniformBox(Domain::cube(d, -2.0, 2.0)),
            sigma0: 1.0,
            precision_rule: PrecisionRule::Ngd,
            pd_margin: DEFAULT_PD_MARGIN,
            fs_step: FsStep::Rho,
            fallback: true,
            fixed_omega: None,
            seed: 0,
            replicate: 0,
            snapshot_every: 1,
        }
    }

    fn effective_schedule(&self) -> Schedule {
        match (self.algorithm, self.fixed_omega) {
            (Algorithm::Snga, Some(w)) => Schedule {
                omega1: w,
                alpha: 0.0,
                ..self.schedule
            },
            _ => self.schedule,
        }
    }
}

/// Objective calls by derivative order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub value: u64,
    pub gradient: u64,
    pub hessian: u64,
}

impl EvalCounts {
    fn charge(&mut self, n: u64, gradient: bool, hessian: bool) {
        self.value += n;
        if gradient {
            self.gradient += n;
        }
        if hessian {
            self.hessian += n;
        }
    }
}

impl std::ops::Add for EvalCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            value: self.value + o.value,
            gradient: self.gradient + o.gradient,
            hessian: self.hessian + o.hessian,
        }
    }
}

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub omega: f64,
    pub rho: f64,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub eig_min: Vec<f64>,
    pub eig_max: Vec<f64>,
    pub fbar: f64,
}

/// Result of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub snapshots: Vec<Snapshot>,
    /// Final mixture for the mixture optimizers.
    pub final_state: Option<MixtureState>,
    pub final_means: Vec<Point>,
    pub final_weights: Vec<f64>,
    pub counts: EvalCounts,
}

impl Trace {
    /// JSON-lines export, one snapshot per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.snapshots {
            out.push_str(&serde_json::to_string(s).expect("snapshot serializes"));
            out.push('\n');
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, replicate, iteration, component)`.
///
/// The four counters are folded through splitmix64 in that order and the
/// result seeds a ChaCha8 generator. Iteration 0 is used for initialization.
pub fn substream(seed: u64, replicate: u64, iteration: u64, component: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for v in [replicate, iteration, component] {
        h = splitmix64(h ^ v);
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn init_means(cfg: &RunConfig, d: usize) -> Result<Vec<Point>, OptimizerError> {
    match &cfg.means {
        MeansInit::Explicit(ms) => {
            if ms.len() != cfg.k || ms.iter().any(|m| m.len() != d) {
                return Err(OptimizerError::Config(format!(
                    "explicit init needs {} means of dimension {d}",
                    cfg.k
                )));
            }
            Ok(ms.clone())
        }
        MeansInit::UniformBox(dom) => {
            if dom.lo.len() != d {
                return Err(OptimizerError::Config(format!(
                    "init box has dimension {} but the problem has {d}",
                    dom.lo.len()
                )));
            }
            Ok((0..cfg.k)
                .map(|k| {
                    let mut rng = substream(cfg.seed, cfg.replicate, 0, k as u64);
                    Point::from_fn(d, |i, _| rng.gen_range(dom.lo[i]..=dom.hi[i]))
                })
                .collect())
        }
    }
}

/// Initial mixture: configured means, precision `sigma0^-2 I`, uniform weights.
pub fn initial_state(cfg: &RunConfig, d: usize) -> Result<MixtureState, OptimizerError> {
    if cfg.k == 0 {
        return Err(OptimizerError::Config("K must be at least 1".into()));
    }
    if !(cfg.sigma0 > 0.0) {
        return Err(OptimizerError::Config("sigma0 must be positive".into()));
    }
    let comps = init_means(cfg, d)?
        .into_iter()
        .map(|m| GaussianComponent::isotropic(m, cfg.sigma0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MixtureState::uniform(comps)?)
}

/// `S - rho G + (rho^2 / 2) G S^-1 G`, symmetrized.
pub fn iblr_precision_update(s: &DMatrix<f64>, g: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>, MixtureError> {
    let chol = nalgebra::Cholesky::new(s.clone()).ok_or(MixtureError::NotPositiveDefinite)?;
    let sinv_g = chol.solve(g);
    let mut out = s - g * rho + (g * sinv_g) * (0.5 * rho * rho);
    symmetrize(&mut out);
    Ok(out)
}

/// `(S^-1 + tau I)^-1`: caps the precision eigenvalues at `1 / tau`.
fn apply_floor(s: &DMatrix<f64>, tau: f64) -> Option<DMatrix<f64>> {
    let d = s.nrows();
    let chol = nalgebra::Cholesky::new(s.clone())?;
    let mut cov = chol.inverse();
    symmetrize(&mut cov);
    for i in 0..d {
        cov[(i, i)] += tau;
    }
    let mut out = nalgebra::Cholesky::new(cov)?.inverse();
    symmetrize(&mut out);
    Some(out)
}

struct Resolved {
    objective: Arc<dyn Objective>,
    mu_variant: MuVariant,
    s_variant: SVariant,
    utilities: Option<UtilityScheme>,
}

fn resolve(objective: &Arc<dyn Objective>, cfg: &RunConfig) -> Result<Resolved, OptimizerError> {
    let tier = objective.tier();
    let mu_variant = cfg.mu_variant.unwrap_or_else(|| MuVariant::for_tier(tier));
    let s_variant = cfg.s_variant.unwrap_or_else(|| SVariant::for_tier(tier));
    let needed = match (cfg.algorithm, mu_variant.order().max(s_variant.order())) {
        (Algorithm::FsNvaGm | Algorithm::Pcmaes, _) => Tier::Value,
        (Algorithm::Psga, _) => Tier::Gradient,
        (_, 0) => Tier::Value,
        (_, 1) => Tier::Gradient,
        _ => Tier::Hessian,
    };
    let objective: Arc<dyn Objective> = if needed <= tier {
        objective.clone()
    } else if cfg.fallback {
        Arc::new(WithFallback::new(objective.clone()))
    } else {
        return Err(EstimationError::TierUnavailable { needed, available: tier }.into());
    };
    let utilities = match (cfg.algorithm, cfg.utilities) {
        (Algorithm::FsNvaGm, Some(spec)) => Some(spec.build(cfg.b)?),
        (Algorithm::FsNvaGm, None) => {
            return Err(OptimizerError::Config("fs-nva-gm needs a utility scheme".into()));
        }
        _ => None,
    };
    Ok(Resolved {
        objective,
        mu_variant,
        s_variant,
        utilities,
    })
}

/// Step options shared by the mixture optimizers.
#[derive(Debug, Clone)]
pub struct StepContext<'a> {
    pub objective: &'a dyn Objective,
    pub schedule: Schedule,
    pub b: usize,
    pub mu_variant: MuVariant,
    pub s_variant: SVariant,
    /// `Some` selects the fitness-shaped estimators.
    pub utilities: Option<&'a UtilityScheme>,
    pub precision_rule: PrecisionRule,
    pub pd_margin: f64,
    pub fs_step: FsStep,
    pub seed: u64,
    pub replicate: u64,
}

/// Diagnostics of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub omega: f64,
    pub rho: f64,
    pub fbar: f64,
    pub counts: EvalCounts,
}

/// One iteration of the mixture optimizer at iteration `t >= 1`.
///
/// All estimates use the state as it stood at the start of the step. For each
/// component the precision is updated first (skipped during burn-in), then
/// the mean moves using the new precision; logits move last.
pub fn mixture_step(state: &MixtureState, t: usize, ctx: &StepContext<'_>) -> Result<(MixtureState, StepInfo), OptimizerError> {
    assert!(t >= 1, "iterations start at 1");
    let k_total = state.n_components();
    let omega = ctx.schedule.omega(t);
    let rho = ctx.schedule.rho(t);
    let ap = AnnealedPotential::new(ctx.objective, omega, state);
    let shaped = ctx.utilities.is_some();
    let with_gradient = !shaped && (ctx.mu_variant.order() == 1 || ctx.s_variant.order() == 1);
    let with_hessian = !shaped && ctx.s_variant.order() == 2;
    let mut counts = EvalCounts::default();
    let mut batches: Vec<(Vec<Point>, Vec<PotentialEval>)> = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let mut rng = substream(ctx.seed, ctx.replicate, t as u64, k as u64);
        let xs = state.sample_component(k, ctx.b, &mut rng);
        let evals = xs
            .iter()
            .map(|x| ap.evaluate_parts(x, with_gradient, with_hessian))
            .collect::<Result<Vec<_>, _>>()?;
        counts.charge(ctx.b as u64, with_gradient, with_hessian);
        batches.push((xs, evals));
    }
    let values: Vec<Vec<f64>> = batches.iter().map(|(_, e)| e.iter().map(|v| v.value).collect()).collect();
    let fbar = values.iter().flatten().sum::<f64>() / (ctx.b * k_total) as f64;
    let last = &values[k_total - 1];
    let mut logits = state.logits().to_vec();
    for (k, v) in logits.iter_mut().enumerate() {
        *v += rho * grad_pi_from_values(&values[k], last);
    }
    let mut comps = Vec::with_capacity(k_total);
    for (k, (xs, evals)) in batches.iter().enumerate() {
        let comp = state.component(k);
        let (g_mu, g_s) = match ctx.utilities {
            Some(u) => fs_from_values(comp, xs, &values[k], u)?,
            None => (
                grad_mu_from_evals(comp, xs, evals, ctx.mu_variant),
                grad_prec_from_evals(comp, xs, evals, ctx.s_variant),
            ),
        };
        let rho_c = match (ctx.utilities, ctx.fs_step) {
            (Some(_), FsStep::RhoOmega) => rho * omega,
            _ => rho,
        };
        let updated = if t > ctx.schedule.kappa {
            let s_new = update_precision(comp.precision(), &g_s, rho_c, ctx.precision_rule, ctx.pd_margin, t, k)?;
            let s_new = if ctx.schedule.tau > 0.0 {
                apply_floor(&s_new, ctx.schedule.tau).ok_or(OptimizerError::NonFinite { t, what: "precision" })?
            } else {
                s_new
            };
            GaussianComponent::new(comp.mean().clone(), s_new).map_err(|_| OptimizerError::NonFinite { t, what: "precision" })?
        } else {
            comp.clone()
        };
        let step = updated.solve(&g_mu) * rho_c;
        let mean = comp.mean() + step;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(OptimizerError::NonFinite { t, what: "mean" });
        }
        comps.push(updated.with_mean(mean));
    }
    let next = MixtureState::from_logits(logits, comps).map_err(|_| OptimizerError::NonFinite { t, what: "logits" })?;
    Ok((
        next,
        StepInfo {
            omega,
            rho,
            fbar,
            counts,
        },
    ))
}

fn update_precision(
    s: &DMatrix<f64>,
    g: &DMatrix<f64>,
    rho: f64,
    rule: PrecisionRule,
    margin: f64,
    t: usize,
    component: usize,
) -> Result<DMatrix<f64>, OptimizerError> {
    match rule {
        PrecisionRule::Iblr => {
            let out = iblr_precision_update(s, g, rho)?;
            if cholesky_lower(&out).is_some() {
                Ok(out)
            } else {
                Err(OptimizerError::NonFinite { t, what: "precision" })
            }
        }
        PrecisionRule::Ngd => {
            let mut r = rho;
            for _ in 0..=MAX_HALVINGS {
                let mut out = s - g * r;
                symmetrize(&mut out);
                let accepted = if margin > 0.0 {
                    cholesky_lower(&(&out - s * margin)).is_some()
                } else {
                    cholesky_lower(&out).is_some()
                };
                if accepted {
                    return Ok(out);
                }
                r *= 0.5;
            }
            Err(OptimizerError::PdGuardExhausted { t, component })
        }
    }
}

/// Annealed mixture step with the unshaped estimators.
pub fn nva_gm_step(state: &MixtureState, t: usize, ctx: &StepContext<'_>) -> Result<(MixtureState, StepInfo), OptimizerError> {
    mixture_step(state, t, &StepContext { utilities: None, ..ctx.clone() })
}

/// Annealed mixture step with rank-based utilities for means and precisions.
pub fn fs_nva_gm_step(
    state: &MixtureState,
    t: usize,
    ctx: &StepContext<'_>,
    utilities: &UtilityScheme,
) -> Result<(MixtureState, StepInfo), OptimizerError> {
    mixture_step(
        state,
        t,
        &StepContext {
            utilities: Some(utilities),
            ..ctx.clone()
        },
    )
}

fn snapshot(state: &MixtureState, info: &StepInfo, t: usize) -> Snapshot {
    let (eig_min, eig_max) = state.components().iter().map(|c| c.precision_eigen_range()).unzip();
    Snapshot {
        t,
        omega: info.omega,
        rho: info.rho,
        weights: state.weights().to_vec(),
        means: state.components().iter().map(|c| c.mean().iter().cloned().collect()).collect(),
        eig_min,
        eig_max,
        fbar: info.fbar,
    }
}

fn check_sizes(cfg: &RunConfig) -> Result<(), OptimizerError> {
    if cfg.k == 0 || cfg.b == 0 || cfg.t == 0 {
        return Err(OptimizerError::Config("K, B and T must be positive".into()));
    }
    if cfg.snapshot_every == 0 {
        return Err(OptimizerError::Config("snapshot period must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.pd_margin) {
        return Err(OptimizerError::Config("pd_margin must lie in [0, 1)".into()));
    }
    cfg.schedule.validate()
}

fn mixture_run(objective: &Arc<dyn Objective>, cfg: &RunConfig) -> Result<Trace, OptimizerError> {
    let resolved = resolve(objective, cfg)?;
    let mut state = initial_state(cfg, objective.dim())?;
    let ctx = StepContext {
        objective: resolved.objective.as_ref(),
        schedule: cfg.effective_schedule(),
        b: cfg.b,
        mu_variant: resolved.mu_variant,
        s_variant: resolved.s_variant,
        utilities: resolved.utilities.as_ref(),
        precision_rule: cfg.precision_rule,
        pd_margin: cfg.pd_margin,
        fs_step: cfg.fs_step,
        seed: cfg.seed,
        replicate: cfg.replicate,
    };
    let mut counts = EvalCounts::default();
    let mut snapshots = Vec::with_capacity(cfg.t / cfg.snapshot_every + 1);
    for t in 1..=cfg.t {
        let (next, info) = mixture_step(&state, t, &ctx)?;
        state = next;
        counts = counts + info.counts;
        if t % cfg.snapshot_every == 0 || t == cfg.t {
            snapshots.push(snapshot(&state, &info, t));
        }
    }
    Ok(Trace {
        algorithm: cfg.algorithm,
        snapshots,
        final_means: state.means(),
        final_weights: state.weights().to_vec(),
        final_state: Some(state),
        counts,
    })
}

/// Mixture optimizer at a constant temperature `cfg.fixed_omega`.
pub fn snga_run(objective: &Arc<dyn Objective>, cfg: &RunConfig) -> Result<Trace, OptimizerError> {
    let omega = cfg
        .fixed_omega
        .ok_or_else(|| OptimizerError::Config("snga needs a fixed temperature".into()))?;
    if !(omega > 0.0) {
        return Err(OptimizerError::Config("the fixed temperature must be positive".into()));
    }
    mixture_run(objective, &RunConfig { algorithm: Algorithm::Snga, ..cfg.clone() })
}

/// `K` independent gradient-ascent particles with step `t^-0.55`.
///
/// The objective is treated as deterministic: each step evaluates one
/// gradient, while the counters charge `B` gradient calls per particle and
/// step. A particle whose next position would be non-finite stays put.
pub fn psga_run(objective: &Arc<dyn Objective>, cfg: &RunConfig) -> Result<Trace, OptimizerError> {
    check_sizes(cfg)?;
    let resolved = resolve(objective, cfg)?;
    let obj = resolved.objective;
    let mut xs = init_means(cfg, obj.dim())?;
    let mut snapshots = Vec::new();
    let k = cfg.k;
    for t in 1..=cfg.t {
        let rho = (t as f64).powf(-0.55);
        for x in xs.iter_mut() {
            let g = obj.gradient(x).expect("gradient tier resolved");
            let next = &*x + g * rho;
            if next.iter().all(|v| v.is_finite()) {
                *x = next;
            }
        }
        if t % cfg.snapshot_every == 0 || t == cfg.t {
            snapshots.push(Snapshot {
                t,
                omega: 0.0,
                rho,
                weights: vec![1.0 / k as f64; k],
                means: xs.iter().map(|x| x.iter().cloned().collect()).collect(),
                eig_min: vec![],
                eig_max: vec![],
                fbar: xs.iter().map(|x| obj.value(x)).sum::<f64>() / k as f64,
            });
        }
    }
    let n = (cfg.b * cfg.k * cfg.t) as u64;
    Ok(Trace {
        algorithm: Algorithm::Psga,
        snapshots,
        final_weights: vec![1.0 / k as f64; k],
        final_means: xs,
        final_state: None,
        counts: EvalCounts {
            value: 0,
            gradient: n,
            hessian: 0,
        },
    })
}

/// State of one CMA-ES instance.
#[derive(Debug, Clone)]
struct Cma {
    mean: Point,
    sigma: f64,
    c: DMatrix<f64>,
    p_sigma: Point,
    p_c: Point,
}

/// Strategy constants for `(mu / mu_w, lambda)`-CMA-ES.
#[derive(Debug, Clone)]
pub struct CmaParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl CmaParams {
    /// Standard defaults for dimension `n`, population `lambda` and `mu` parents.
    pub fn new(n: usize, lambda: usize, mu: usize) -> Self {
        let nf = n as f64;
        let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Self {
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

impl Cma {
    fn new(mean: Point, sigma: f64) -> Self {
        let n = mean.len();
        Self {
            mean,
            sigma,
            c: DMatrix::identity(n, n),
            p_sigma: Point::zeros(n),
            p_c: Point::zeros(n),
        }
    }

    /// One generation, maximizing `f`.
    fn step<R: Rng>(&mut self, f: &dyn Objective, p: &CmaParams, generation: usize, rng: &mut R) {
        let n = self.mean.len();
        let eig = SymmetricEigen::new(self.c.clone());
        let dvals = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());
        let bmat = eig.eigenvectors;
        let mut pop: Vec<(Point, Point, f64)> = (0..p.lambda)
            .map(|_| {
                let z = Point::from_fn(n, |_, _| rng.sample(StandardNormal));
                let y = &bmat * z.component_mul(&dvals);
                let x = &self.mean + &y * self.sigma;
                let v = f.value(&x);
                (x, y, v)
            })
            .collect();
        let order = crate::estimation::rank_descending(&pop.iter().map(|e| e.2).collect::<Vec<_>>());
        let sorted: Vec<(Point, Point, f64)> = order.iter().map(|&i| pop[i].clone()).collect();
        pop.clear();
        let mut y_w = Point::zeros(n);
        for (w, (_, y, _)) in p.weights.iter().zip(&sorted) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean += &y_w * self.sigma;
        let c_inv_sqrt = &bmat * DMatrix::from_diagonal(&dvals.map(|v| 1.0 / v)) * bmat.transpose();
        self.p_sigma = &self.p_sigma * (1.0 - p.c_sigma)
            + (&c_inv_sqrt * &y_w) * (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt();
        let ps_norm = self.p_sigma.norm();
        let gen = (generation + 1) as f64;
        let h_sigma = ps_norm / (1.0 - (1.0 - p.c_sigma).powf(2.0 * gen)).sqrt() / p.chi_n < 1.4 + 2.0 / (n as f64 + 1.0);
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - p.c_c) + &y_w * (h * (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt());
        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, (_, y, _)) in p.weights.iter().zip(&sorted) {
            rank_mu += y * y.transpose() * *w;
        }
        let delta_h = (1.0 - h) * p.c_c * (2.0 - p.c_c);
        self.c = &self.c * (1.0 - p.c_1 - p.c_mu + p.c_1 * delta_h)
            + (&self.p_c * self.p_c.transpose()) * p.c_1
            + rank_mu * p.c_mu;
        symmetrize(&mut self.c);
        self.sigma *= ((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();
    }
}

/// `K` independent CMA-ES instances with population `B` and `B0` parents.
///
/// `B0` comes from a CMA-ES utility spec when one is configured, else `B / 4`.
pub fn pcmaes_run(objective: &Arc<dyn Objective>, cfg: &RunConfig) -> Result<Trace, OptimizerError> {
    check_sizes(cfg)?;
    let d = objective.dim();
    let mu = match cfg.utilities {
        Some(UtilitySpec::Cmaes { b0 }) => b0,
        Some(UtilitySpec::Truncation { eta }) => ((cfg.b as f64 * eta + 0.5).floor() as usize).max(1),
        None => (cfg.b / 4).max(1),
    };
    if mu > cfg.b {
        return Err(OptimizerError::Config("B0 must not exceed B".into()));
    }
    let params = CmaParams::new(d, cfg.b, mu);
    let mut instances: Vec<Cma> = init_means(cfg, d)?.into_iter().map(|m| Cma::new(m, cfg.sigma0)).collect();
    let mut snapshots = Vec::new();
    for t in 1..=cfg.t {
        for (k, inst) in instances.iter_mut().enumerate() {
            let mut rng = substream(cfg.seed, cfg.replicate, t as u64, k as u64);
            inst.step(objective.as_ref(), &params, t - 1, &mut rng);
        }
        if t % cfg.snapshot_every == 0 || t == cfg.t {
            let k = cfg.k as f64;
            snapshots.push(Snapshot {
                t,
                omega: 0.0,
                rho: 0.0,
                weights: vec![1.0 / k; cfg.k],
                means: instances.iter().map(|c| c.mean.iter().cloned().collect()).collect(),
                eig_min: instances.iter().map(|c| 1.0 / (c.sigma * c.sigma * c.c.symmetric_eigenvalues().max())).collect(),
                eig_max: instances.iter().map(|c| 1.0 / (c.sigma * c.sigma * c.c.symmetric_eigenvalues().min())).collect(),
                fbar: instances.iter().map(|c| objective.value(&c.mean)).sum::<f64>() / k,
            });
        }
    }
    Ok(Trace {
        algorithm: Algorithm::Pcmaes,
        snapshots,
        final_weights: vec![1.0 / cfg.k as f64; cfg.k],
        final_means: instances.into_iter().map(|c| c.mean).collect(),
        final_state: None,
        counts: EvalCounts {
            value: (cfg.b * cfg.k * cfg.t) as u64,
            gradient: 0,
            hessian: 0,
        },
    })
}

/// Runs `cfg` on `objective`. Deterministic given the seed and replicate index.
pub fn run(objective: &Arc<dyn Objective>, cfg: &RunConfig) -> Result<Trace, OptimizerError> {
    check_sizes(cfg)?;
    match cfg.algorithm {
        Algorithm::NvaGm | Algorithm::FsNvaGm => mixture_run(objective, cfg),
        Algorithm::Snga => snga_run(objective, cfg),
        Algorithm::Psga => psga_run(objective, cfg),
        Algorithm::Pcmaes => pcmaes_run(objective, cfg),
    }
}

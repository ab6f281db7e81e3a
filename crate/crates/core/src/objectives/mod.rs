//! Objective functions and their known modes.
//!
//! An [`Objective`] is maximized. It always exposes its value and, depending
//! on its [`Tier`], an analytic gradient and Hessian. [`WithFallback`] fills
//! in missing derivatives by central finite differences.

mod cec;
mod functions;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::mixture::{symmetrize, GaussianComponent, MixtureError, MixtureState, Point};

pub use cec::{cec_problem, make_cec_suite, pyramidal_extend, CecFunction, PyramidalExtension};
pub use functions::{
    make_asymmetric_gmm, make_degenerate_psi, make_gmm_objective, make_quadratic, make_styblinski_tang,
    make_symmetric_gmm, psi, styblinski_tang_roots, GmmObjective, Quadratic, StyblinskiTang, SYM_GMM_VARIANCE,
};

/// Which derivatives an objective provides analytically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Value,
    Gradient,
    Hessian,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Value => "value",
            Tier::Gradient => "gradient",
            Tier::Hessian => "hessian",
        })
    }
}

/// A function to maximize.
///
/// Implementations must be pure: evaluation counting is the caller's job.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn tier(&self) -> Tier;

    fn value(&self, x: &Point) -> f64;

    /// Analytic gradient, `None` below [`Tier::Gradient`].
    fn gradient(&self, _x: &Point) -> Option<Point> {
        None
    }

    /// Analytic Hessian, `None` below [`Tier::Hessian`].
    fn hessian(&self, _x: &Point) -> Option<DMatrix<f64>> {
        None
    }
}

/// Default step for finite-difference gradients.
pub const FD_GRAD_STEP: f64 = 1e-6;
/// Default step for finite-difference Hessians.
pub const FD_HESS_STEP: f64 = 1e-4;

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F: Fn(&Point) -> f64 + ?Sized>(f: &F, x: &Point, h: f64) -> Point {
    let mut g = Point::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Hessian of `f` at `x` from function values. Symmetric.
pub fn finite_diff_hess<F: Fn(&Point) -> f64 + ?Sized>(f: &F, x: &Point, h: f64) -> DMatrix<f64> {
    let d = x.len();
    let mut hess = DMatrix::zeros(d, d);
    let f0 = f(x);
    let mut xp = x.clone();
    for i in 0..d {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..d {
            let xj = x[j];
            let mut corner = |si: f64, sj: f64| {
                xp[i] = xi + si * h;
                xp[j] = xj + sj * h;
                let v = f(&xp);
                xp[i] = xi;
                xp[j] = xj;
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Central-difference Jacobian of a gradient field, symmetrized.
pub fn finite_diff_jacobian<G: Fn(&Point) -> Point + ?Sized>(g: &G, x: &Point, h: f64) -> DMatrix<f64> {
    let d = x.len();
    let mut jac = DMatrix::zeros(d, d);
    let mut xp = x.clone();
    for i in 0..d {
        let xi = x[i];
        xp[i] = xi + h;
        let gp = g(&xp);
        xp[i] = xi - h;
        let gm = g(&xp);
        xp[i] = xi;
        jac.set_column(i, &((gp - gm) / (2.0 * h)));
    }
    symmetrize(&mut jac);
    jac
}

/// Wraps an objective so that every derivative is available, using central
/// differences for the missing ones. The Hessian is differenced from the
/// analytic gradient when one exists.
#[derive(Debug, Clone)]
pub struct WithFallback {
    inner: Arc<dyn Objective>,
}

impl WithFallback {
    pub fn new(inner: Arc<dyn Objective>) -> Self {
        Self { inner }
    }

    pub fn inner(&self) -> &Arc<dyn Objective> {
        &self.inner
    }
}

impl Objective for WithFallback {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn tier(&self) -> Tier {
        Tier::Hessian
    }

    fn value(&self, x: &Point) -> f64 {
        self.inner.value(x)
    }

    fn gradient(&self, x: &Point) -> Option<Point> {
        self.inner
            .gradient(x)
            .or_else(|| Some(finite_diff_grad(&|p: &Point| self.inner.value(p), x, FD_GRAD_STEP)))
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        if let Some(h) = self.inner.hessian(x) {
            return Some(h);
        }
        if self.inner.tier() >= Tier::Gradient {
            let g = |p: &Point| self.inner.gradient(p).expect("gradient tier");
            Some(finite_diff_jacobian(&g, x, FD_GRAD_STEP * 10.0))
        } else {
            Some(finite_diff_hess(&|p: &Point| self.inner.value(p), x, FD_HESS_STEP))
        }
    }
}

/// A known maximizer of an objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    pub location: Point,
    pub is_global: bool,
    pub hessian: Option<DMatrix<f64>>,
    pub value: f64,
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lo: Point,
    pub hi: Point,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self {
            lo: Point::from_vec(lo),
            hi: Point::from_vec(hi),
        }
    }

    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.iter().zip(self.lo.iter().zip(self.hi.iter())).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn widths(&self) -> Point {
        &self.hi - &self.lo
    }
}

/// An objective bundled with its modes and benchmark metadata.
#[derive(Debug, Clone)]
pub struct Problem {
    pub id: String,
    pub objective: Arc<dyn Objective>,
    pub modes: Vec<ModeSpec>,
    /// Rectangle the problem is posed on, if any.
    pub domain: Option<Domain>,
    /// Published evaluation budget, if any.
    pub budget: Option<u64>,
    /// Objective used when scoring final means; defaults to `objective`.
    pub scoring: Option<Arc<dyn Objective>>,
}

impl Problem {
    pub fn new(id: impl Into<String>, objective: Arc<dyn Objective>, modes: Vec<ModeSpec>) -> Self {
        Self {
            id: id.into(),
            objective,
            modes,
            domain: None,
            budget: None,
            scoring: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// Number of global modes, `I`.
    pub fn n_global(&self) -> usize {
        self.modes.iter().filter(|m| m.is_global).count()
    }

    /// Number of listed modes, `J`.
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn global_modes(&self) -> impl Iterator<Item = &ModeSpec> {
        self.modes.iter().filter(|m| m.is_global)
    }

    /// Value used for scoring a final mean.
    pub fn score(&self, x: &Point) -> f64 {
        self.scoring.as_ref().unwrap_or(&self.objective).value(x)
    }
}

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error("local refinement did not converge from {start:?} (gradient norm {grad_norm:e})")]
    RefineFailed { start: Vec<f64>, grad_norm: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Newton refinement of a local maximum, with a gradient-ascent fallback when
/// the Hessian is not negative definite. Missing derivatives are differenced.
pub fn refine_mode(objective: &dyn Objective, start: &Point) -> Result<Point, ObjectiveError> {
    let grad = |x: &Point| {
        objective
            .gradient(x)
            .unwrap_or_else(|| finite_diff_grad(&|p: &Point| objective.value(p), x, FD_GRAD_STEP))
    };
    let hess = |x: &Point| {
        objective.hessian(x).unwrap_or_else(|| {
            if objective.tier() >= Tier::Gradient {
                finite_diff_jacobian(&grad, x, 1e-5)
            } else {
                finite_diff_hess(&|p: &Point| objective.value(p), x, FD_HESS_STEP)
            }
        })
    };
    let mut x = start.clone();
    let mut g = grad(&x);
    for _ in 0..200 {
        if g.norm() < 1e-12 {
            break;
        }
        let h = hess(&x);
        let neg = -&h;
        let step = match crate::mixture::cholesky_lower(&neg) {
            Some(_) => neg.cholesky().expect("checked positive definite").solve(&g),
            None => g.clone() * 1e-2,
        };
        let mut t = 1.0;
        let f0 = objective.value(&x);
        loop {
            let cand = &x + &step * t;
            let fc = objective.value(&cand);
            let gc = grad(&cand);
            if fc >= f0 - 1e-12 * f0.abs().max(1.0) || gc.norm() < g.norm() || t < 1e-8 {
                x = cand;
                g = gc;
                break;
            }
            t *= 0.5;
        }
    }
    let grad_norm = g.norm();
    if grad_norm < 1e-6 {
        Ok(x)
    } else {
        Err(ObjectiveError::RefineFailed {
            start: start.iter().cloned().collect(),
            grad_norm,
        })
    }
}

/// Builds a [`ModeSpec`] at `location`, filling in value and Hessian.
pub fn mode_at(objective: &dyn Objective, location: Point, is_global: bool) -> ModeSpec {
    let hessian = objective.hessian(&location).or_else(|| {
        if objective.tier() >= Tier::Gradient {
            let g = |p: &Point| objective.gradient(p).expect("gradient tier");
            Some(finite_diff_jacobian(&g, &location, 1e-5))
        } else {
            None
        }
    });
    ModeSpec {
        value: objective.value(&location),
        location,
        is_global,
        hessian,
    }
}

/// Builds the mixture used by the GMM objectives from weights, means and covariances.
pub(crate) fn mixture_from_covariances(
    weights: &[f64],
    means: &[Point],
    covariances: &[DMatrix<f64>],
) -> Result<MixtureState, MixtureError> {
    if means.len() != covariances.len() {
        return Err(MixtureError::DimensionMismatch(format!(
            "{} means for {} covariances",
            means.len(),
            covariances.len()
        )));
    }
    let comps = means
        .iter()
        .zip(covariances)
        .map(|(m, c)| GaussianComponent::from_covariance(m.clone(), c.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    MixtureState::new(weights.to_vec(), comps)
}

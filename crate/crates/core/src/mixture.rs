//! Gaussian-mixture search distributions.
//!
//! A [`MixtureState`] holds `K` Gaussian components parameterized by their
//! means and *precision* matrices, together with the mixing weights. Inside
//! the optimizers the `K - 1` logits `v_k = log(pi_k / pi_K)` are the source of
//! truth for the weights; the simplex vector is derived from them.
//!
//! Every component caches the Cholesky factor of its precision matrix. All
//! determinants, solves and samples go through that factor, so neither the
//! covariance nor the determinant is ever formed directly.


use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point of the search space.
pub type Point = DVector<f64>;

/// Relative tolerance used when checking that a precision matrix is symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixtureError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("component {index}: {source}")]
    Component {
        index: usize,
        #[source]
        source: Box<MixtureError>,
    },
    #[error("weight {index} is {value}; weights must be strictly positive")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("a mixture needs at least one component")]
    Empty,
    #[error("mode {index} is degenerate: the negated Hessian is not positive definite")]
    DegenerateMode { index: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Symmetrizes a square matrix in place as `(M + M^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Cholesky factorization of a symmetric matrix, `None` unless it is positive definite.
pub(crate) fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l();
    if l.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
        Some(l)
    } else {
        None
    }
}

/// Returns `true` when the symmetric matrix admits a Cholesky factorization.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    cholesky_lower(m).is_some()
}

/// One Gaussian component `N(mean, precision^-1)` with a cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    mean: Point,
    precision: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl GaussianComponent {
    /// Builds a component from its mean and precision matrix.
    ///
    /// The precision must be symmetric to [`SYMMETRY_TOLERANCE`] (relative) and
    /// positive definite. It is stored exactly symmetrized.
    pub fn new(mean: Point, mut precision: DMatrix<f64>) -> Result<Self, MixtureError> {
        let d = mean.len();
        if d == 0 {
            return Err(MixtureError::DimensionMismatch("empty mean vector".into()));
        }
        if precision.nrows() != d || precision.ncols() != d {
            return Err(MixtureError::DimensionMismatch(format!(
                "mean has length {d} but precision is {}x{}",
                precision.nrows(),
                precision.ncols()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(MixtureError::NonFinite("mean"));
        }
        let asym = relative_asymmetry(&precision);
        if asym > SYMMETRY_TOLERANCE {
            return Err(MixtureError::NotSymmetric(asym));
        }
        symmetrize(&mut precision);
        let chol = cholesky_lower(&precision).ok_or(MixtureError::NotPositiveDefinite)?;
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            precision,
            chol,
            log_det,
        })
    }

    /// Builds a component from a covariance matrix.
    pub fn from_covariance(mean: Point, covariance: DMatrix<f64>) -> Result<Self, MixtureError> {
        let mut cov = covariance;
        symmetrize(&mut cov);
        let chol = Cholesky::new(cov).ok_or(MixtureError::NotPositiveDefinite)?;
        let mut precision = chol.inverse();
        symmetrize(&mut precision);
        Self::new(mean, precision)
    }

    /// Isotropic component with covariance `sigma^2 I`.
    pub fn isotropic(mean: Point, sigma: f64) -> Result<Self, MixtureError> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) / (sigma * sigma))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Point {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Lower-triangular `L` with `precision = L L^T`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `log det(precision)`.
    pub fn log_det_precision(&self) -> f64 {
        self.log_det
    }

    /// Returns a copy with a different mean and the same precision.
    pub fn with_mean(&self, mean: Point) -> Self {
        Self {
            mean,
            ..self.clone()
        }
    }

    /// `precision^-1 v`.
    pub fn solve(&self, v: &Point) -> Point {
        let y = self
            .chol
            .solve_lower_triangular(v)
            .expect("cholesky factor has a positive diagonal");
        self.chol
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    /// The covariance matrix `precision^-1`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut cov = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            cov.set_column(j, &self.solve(&e));
        }
        symmetrize(&mut cov);
        cov
    }

    /// Squared Mahalanobis distance `(x - mean)^T precision (x - mean)`.
    pub fn mahalanobis_sq(&self, x: &Point) -> f64 {
        let diff = x - &self.mean;
        self.chol.tr_mul(&diff).norm_squared()
    }

    /// Log-density at `x`.
    pub fn log_pdf(&self, x: &Point) -> f64 {
        let d = self.dim() as f64;
        -0.5 * d * LN_2PI + 0.5 * self.log_det - 0.5 * self.mahalanobis_sq(x)
    }

    /// Maps a standard-normal vector `z` to `mean + L^-T z`.
    pub fn transform_standard(&self, z: &Point) -> Point {
        let offset = self
            .chol
            .tr_solve_lower_triangular(z)
            .expect("cholesky factor has a positive diagonal");
        &self.mean + offset
    }

    /// Draws `n` i.i.d. samples. Each sample consumes `dim` standard normals
    /// from `rng` in coordinate order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Point> {
        (0..n)
            .map(|_| {
                let z = Point::from_fn(self.dim(), |_, _| rng.sample(StandardNormal));
                self.transform_standard(&z)
            })
            .collect()
    }

    /// Smallest and largest eigenvalue of the precision matrix.
    pub fn precision_eigen_range(&self) -> (f64, f64) {
        let eig = self.precision.clone().symmetric_eigenvalues();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// Differential entropy of the component.
    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        0.5 * d * (1.0 + LN_2PI) - 0.5 * self.log_det
    }
}

/// Mixing weights from the `K - 1` logits `v_k = log(pi_k / pi_K)`.
///
/// The computation is shifted by the largest logit, so saturated inputs stay finite.
pub fn weights_from_logits(logits: &[f64]) -> Vec<f64> {
    log_weights_from_logits(logits)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Log mixing weights from logits, with the same max-shift as [`weights_from_logits`].
pub fn log_weights_from_logits(logits: &[f64]) -> Vec<f64> {
    let shift = logits.iter().cloned().fold(0.0f64, f64::max);
    let denom = (-shift).exp() + logits.iter().map(|v| (v - shift).exp()).sum::<f64>();
    let log_norm = shift + denom.ln();
    logits
        .iter()
        .map(|v| v - log_norm)
        .chain(std::iter::once(-log_norm))
        .collect()
}

/// Logits `v_k = log(pi_k / pi_K)` of a strictly positive weight vector.
pub fn logits_from_weights(weights: &[f64]) -> Result<Vec<f64>, MixtureError> {
    if weights.is_empty() {
        return Err(MixtureError::Empty);
    }
    for (index, &value) in weights.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(MixtureError::NonPositiveWeight { index, value });
        }
    }
    let last = weights[weights.len() - 1].ln();
    Ok(weights[..weights.len() - 1]
        .iter()
        .map(|w| w.ln() - last)
        .collect())
}

/// Numerically stable `log(sum(exp(values)))`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// A Gaussian mixture: weights (via logits) and components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MixtureJson", try_from = "MixtureJson")]
pub struct MixtureState {
    logits: Vec<f64>,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    components: Vec<GaussianComponent>,
}

impl MixtureState {
    /// Builds a mixture from a weight vector. Weights must be strictly positive
    /// and sum to one within `1e-9`; they are renormalized exactly.
    pub fn new(weights: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self, MixtureError> {
        if weights.len() != components.len() {
            return Err(MixtureError::DimensionMismatch(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MixtureError::NotNormalized(sum));
        }
        let logits = logits_from_weights(&weights)?;
        Self::from_logits(logits, components)
    }

    /// Builds a mixture from `K - 1` logits.
    pub fn from_logits(logits: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self, MixtureError> {
        if components.is_empty() {
            return Err(MixtureError::Empty);
        }
        if logits.len() + 1 != components.len() {
            return Err(MixtureError::DimensionMismatch(format!(
                "{} logits for {} components",
                logits.len(),
                components.len()
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(MixtureError::NonFinite("logits"));
        }
        let d = components[0].dim();
        if let Some(bad) = components.iter().position(|c| c.dim() != d) {
            return Err(MixtureError::DimensionMismatch(format!(
                "component {bad} has dimension {} but component 0 has {d}",
                components[bad].dim()
            )));
        }
        let log_weights = log_weights_from_logits(&logits);
        let weights = log_weights.iter().map(|v| v.exp()).collect();
        Ok(Self {
            logits,
            log_weights,
            weights,
            components,
        })
    }

    /// Equal weights over the given components.
    pub fn uniform(components: Vec<GaussianComponent>) -> Result<Self, MixtureError> {
        let k = components.len();
        Self::from_logits(vec![0.0; k.saturating_sub(1)], components)
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &GaussianComponent {
        &self.components[k]
    }

    pub fn means(&self) -> Vec<Point> {
        self.components.iter().map(|c| c.mean().clone()).collect()
    }

    /// Draws `n` samples from component `k`.
    pub fn sample_component<R: Rng + ?Sized>(&self, k: usize, n: usize, rng: &mut R) -> Vec<Point> {
        self.components[k].sample(rng, n)
    }

    /// Per-component `log pi_k + log N(x; mu_k, S_k^-1)`.
    fn joint_log_terms(&self, x: &Point) -> Vec<f64> {
        self.components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| lw + c.log_pdf(x))
            .collect()
    }

    /// Responsibilities `r_k(x)`, computed in log space.
    pub fn responsibilities(&self, x: &Point) -> Vec<f64> {
        let terms = self.joint_log_terms(x);
        let lse = log_sum_exp(&terms);
        terms.iter().map(|t| (t - lse).exp()).collect()
    }

    /// `log q(x)`.
    pub fn log_pdf(&self, x: &Point) -> f64 {
        log_sum_exp(&self.joint_log_terms(x))
    }

    /// `log q(x)` with optional gradient and Hessian, sharing one pass over the components.
    pub fn log_pdf_derivatives(&self, x: &Point, order: u8) -> LogDensity {
        let terms = self.joint_log_terms(x);
        let value = log_sum_exp(&terms);
        if order == 0 {
            return LogDensity {
                value,
                gradient: None,
                hessian: None,
            };
        }
        let d = x.len();
        let resp: Vec<f64> = terms.iter().map(|t| (t - value).exp()).collect();
        let scores: Vec<Point> = self
            .components
            .iter()
            .map(|c| c.precision() * (c.mean() - x))
            .collect();
        let mut grad = Point::zeros(d);
        for (r, g) in resp.iter().zip(&scores) {
            grad.axpy(*r, g, 1.0);
        }
        let hessian = (order >= 2).then(|| {
            let mut h = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in i..d {
                    let mut acc = -grad[i] * grad[j];
                    for ((r, g), c) in resp.iter().zip(&scores).zip(&self.components) {
                        acc += r * (g[i] * g[j] - c.precision()[(i, j)]);
                    }
                    h[(i, j)] = acc;
                    h[(j, i)] = acc;
                }
            }
            h
        });
        LogDensity {
            value,
            gradient: Some(grad),
            hessian,
        }
    }
}

/// `log q(x)` and, when requested, its first two derivatives.
#[derive(Debug, Clone)]
pub struct LogDensity {
    pub value: f64,
    pub gradient: Option<Point>,
    pub hessian: Option<DMatrix<f64>>,
}

/// `log sum_k pi_k N(x; mu_k, S_k^-1)`.
pub fn mixture_logpdf(state: &MixtureState, x: &Point) -> f64 {
    state.log_pdf(x)
}

/// Gradient of the mixture log-density: `sum_k r_k(x) S_k (mu_k - x)`.
pub fn mixture_logpdf_grad(state: &MixtureState, x: &Point) -> Point {
    state
        .log_pdf_derivatives(x, 1)
        .gradient
        .expect("order 1 yields a gradient")
}

/// Hessian of the mixture log-density,
/// `-(grad)(grad)^T + sum_k r_k [S_k (mu_k - x)(mu_k - x)^T S_k - S_k]`.
/// Exactly symmetric.
pub fn mixture_logpdf_hess(state: &MixtureState, x: &Point) -> DMatrix<f64> {
    state
        .log_pdf_derivatives(x, 2)
        .hessian
        .expect("order 2 yields a Hessian")
}

/// Entropy of a Gaussian with precision `precision`.
pub fn gaussian_entropy(precision: &DMatrix<f64>) -> Result<f64, MixtureError> {
    let d = precision.nrows() as f64;
    let mut s = precision.clone();
    symmetrize(&mut s);
    let l = cholesky_lower(&s).ok_or(MixtureError::NotPositiveDefinite)?;
    let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(0.5 * d * (1.0 + LN_2PI) - 0.5 * log_det)
}

/// Entropy approximation for well-separated components:
/// `-sum pi_k log pi_k + sum pi_k H(N_k)`.
pub fn approx_mixture_entropy(state: &MixtureState) -> f64 {
    state
        .weights()
        .iter()
        .zip(state.log_weights())
        .zip(state.components())
        .map(|((w, lw), c)| w * (c.entropy() - lw))
        .sum()
}

/// Weights of the zero-temperature Gibbs limit, one per global mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitWeights {
    pub values: Vec<f64>,
}

/// `c_i ∝ det(-H_i)^{-1/2}` for the Hessians `H_i` at the global modes, normalized.
///
/// Fails with [`MixtureError::DegenerateMode`] when some `-H_i` is not positive definite.
pub fn limit_weights(hessians: &[DMatrix<f64>]) -> Result<LimitWeights, MixtureError> {
    if hessians.is_empty() {
        return Err(MixtureError::Empty);
    }
    let mut log_c = Vec::with_capacity(hessians.len());
    for (index, h) in hessians.iter().enumerate() {
        let mut neg = -h;
        symmetrize(&mut neg);
        let l = cholesky_lower(&neg).ok_or(MixtureError::DegenerateMode { index })?;
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        log_c.push(-0.5 * log_det);
    }
    let lse = log_sum_exp(&log_c);
    Ok(LimitWeights {
        values: log_c.iter().map(|v| (v - lse).exp()).collect(),
    })
}

/// JSON layout of a mixture: row-major, full matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureJson {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub precisions: Vec<Vec<Vec<f64>>>,
}

impl From<MixtureState> for MixtureJson {
    fn from(state: MixtureState) -> Self {
        let means = state.components.iter().map(|c| c.mean().iter().cloned().collect()).collect();
        let precisions = state
            .components
            .iter()
            .map(|c| {
                let p = c.precision();
                (0..p.nrows()).map(|i| p.row(i).iter().cloned().collect()).collect()
            })
            .collect();
        MixtureJson {
            weights: state.weights,
            means,
            precisions,
        }
    }
}

impl TryFrom<MixtureJson> for MixtureState {
    type Error = MixtureError;

    fn try_from(json: MixtureJson) -> Result<Self, Self::Error> {
        if json.means.len() != json.precisions.len() {
            return Err(MixtureError::DimensionMismatch(format!(
                "{} means for {} precision matrices",
                json.means.len(),
                json.precisions.len()
            )));
        }
        let mut components = Vec::with_capacity(json.means.len());
        for (index, (mean, rows)) in json.means.into_iter().zip(json.precisions).enumerate() {
            let d = mean.len();
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(MixtureError::Component {
                    index,
                    source: Box::new(MixtureError::DimensionMismatch(format!(
                        "precision is not {d}x{d}"
                    ))),
                });
            }
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            let precision = DMatrix::from_row_slice(d, d, &flat);
            let comp = GaussianComponent::new(Point::from_vec(mean), precision).map_err(|e| {
                MixtureError::Component {
                    index,
                    source: Box::new(e),
                }
            })?;
            components.push(comp);
        }
        let sum: f64 = json.weights.iter().sum();
        let weights = if (sum - 1.0).abs() <= 1e-9 {
            json.weights.iter().map(|w| w / sum).collect()
        } else {
            json.weights
        };
        MixtureState::new(weights, components)
    }
}

impl MixtureState {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mixture serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn comp(mean: &[f64], prec: &[f64]) -> GaussianComponent {
        let d = mean.len();
        GaussianComponent::new(Point::from_row_slice(mean), DMatrix::from_row_slice(d, d, prec)).unwrap()
    }

    #[test]
    fn weights_from_logits_examples() {
        let w = weights_from_logits(&[0.0, 0.0, 0.0]);
        for wi in &w {
            assert!((wi - 0.25).abs() < 1e-15);
        }
        let w = weights_from_logits(&[2f64.ln()]);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        let w = weights_from_logits(&[700.0]);
        assert!(w.iter().all(|v| v.is_finite()));
        assert!((w[0] - 1.0).abs() < 1e-15);
        assert!(w[1] < 1e-300);
    }

    #[test]
    fn logits_from_weights_examples() {
        assert_eq!(logits_from_weights(&[0.5, 0.5]).unwrap(), vec![0.0]);
        assert_eq!(logits_from_weights(&[0.25; 4]).unwrap(), vec![0.0; 3]);
        let v = logits_from_weights(&[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((v[0] - 0.693147).abs() < 1e-6);
        assert!(matches!(
            logits_from_weights(&[1.0, 0.0]),
            Err(MixtureError::NonPositiveWeight { index: 1, .. })
        ));
        assert!(logits_from_weights(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn rejects_bad_precisions() {
        let m = Point::zeros(2);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            GaussianComponent::new(m.clone(), asym),
            Err(MixtureError::NotSymmetric(_))
        ));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(
            GaussianComponent::new(m, indef).unwrap_err(),
            MixtureError::NotPositiveDefinite
        );
    }

    #[test]
    fn logpdf_examples() {
        let s = MixtureState::uniform(vec![comp(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0])]).unwrap();
        assert!((mixture_logpdf(&s, &Point::zeros(2)) + 1.837877).abs() < 1e-6);

        let c = comp(&[0.3, -0.2], &[2.0, 0.4, 0.4, 1.0]);
        let single = MixtureState::uniform(vec![c.clone()]).unwrap();
        let doubled = MixtureState::uniform(vec![c.clone(), c]).unwrap();
        let x = Point::from_row_slice(&[1.0, 0.5]);
        assert!((mixture_logpdf(&single, &x) - mixture_logpdf(&doubled, &x)).abs() < 1e-14);

        let s = MixtureState::uniform(vec![comp(&[-1.0], &[1.0]), comp(&[1.0], &[1.0])]).unwrap();
        assert!((mixture_logpdf(&s, &Point::zeros(1)) + 1.418939).abs() < 1e-6);
    }

    #[test]
    fn gradient_and_hessian_of_single_gaussian() {
        let prec = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.7]);
        let mu = Point::from_row_slice(&[0.5, -1.0]);
        let s = MixtureState::uniform(vec![GaussianComponent::new(mu.clone(), prec.clone()).unwrap()]).unwrap();
        let x = Point::from_row_slice(&[0.1, 0.2]);
        let g = mixture_logpdf_grad(&s, &x);
        let expect = &prec * (&mu - &x);
        assert!((g - expect).norm() < 1e-14);
        let h = mixture_logpdf_hess(&s, &x);
        assert!((h + prec).norm() < 1e-12);
    }

    #[test]
    fn mirror_mixture_gradient_vanishes_at_midpoint() {
        let s = MixtureState::uniform(vec![comp(&[-1.0, 2.0], &[1.0, 0.0, 0.0, 3.0]), comp(&[1.0, 2.0], &[1.0, 0.0, 0.0, 3.0])])
            .unwrap();
        let g = mixture_logpdf_grad(&s, &Point::from_row_slice(&[0.0, 2.0]));
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn hessian_is_exactly_symmetric() {
        let s = MixtureState::new(
            vec![0.2, 0.5, 0.3],
            vec![
                comp(&[0.0, 1.0, -1.0], &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.8]),
                comp(&[1.0, 0.0, 0.5], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
                comp(&[-0.5, 0.2, 0.0], &[3.0, -1.0, 0.2, -1.0, 2.0, 0.4, 0.2, 0.4, 1.5]),
            ],
        )
        .unwrap();
        let h = mixture_logpdf_hess(&s, &Point::from_row_slice(&[0.2, 0.1, -0.3]));
        assert_eq!((&h - h.transpose()).norm(), 0.0);
    }

    #[test]
    fn entropy_examples() {
        let e = gaussian_entropy(&DMatrix::identity(2, 2)).unwrap();
        assert!((e - 2.837877).abs() < 1e-6);
        for d in 1..6 {
            let e = gaussian_entropy(&DMatrix::identity(d, d)).unwrap();
            assert!((e - d as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln()) / 2.0).abs() < 1e-12);
        }
        let e = gaussian_entropy(&DMatrix::from_element(1, 1, 4.0)).unwrap();
        assert!((e - 0.725791).abs() < 1e-6);
        assert!(gaussian_entropy(&DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    #[test]
    fn approx_entropy_examples() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let single = MixtureState::uniform(vec![GaussianComponent::new(Point::zeros(2), p.clone()).unwrap()]).unwrap();
        assert!((approx_mixture_entropy(&single) - gaussian_entropy(&p).unwrap()).abs() < 1e-14);
        let pair = MixtureState::uniform(vec![
            GaussianComponent::new(Point::zeros(2), p.clone()).unwrap(),
            GaussianComponent::new(Point::from_row_slice(&[3.0, 0.0]), p.clone()).unwrap(),
        ])
        .unwrap();
        let expect = 2f64.ln() + gaussian_entropy(&p).unwrap();
        assert!((approx_mixture_entropy(&pair) - expect).abs() < 1e-14);
    }

    #[test]
    fn limit_weights_examples() {
        let h = -DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]);
        let w = limit_weights(&[h.clone(), h.clone(), h]).unwrap();
        for v in &w.values {
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
        }
        let w = limit_weights(&[-DMatrix::identity(3, 3)]).unwrap();
        assert_eq!(w.values, vec![1.0]);
        let singular = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -2.0]);
        assert_eq!(
            limit_weights(&[-DMatrix::identity(2, 2), singular]).unwrap_err(),
            MixtureError::DegenerateMode { index: 1 }
        );
    }

    #[test]
    fn sampling_regression_value() {
        let c = comp(&[5.0, 5.0], &[1.0, 0.0, 0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = c.sample(&mut rng, 1).remove(0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        assert_eq!(x[0], 5.0 + z0);
        assert_eq!(x[1], 5.0 + z1);
        // frozen at first build
        assert_eq!(x[0].to_bits(), REGRESSION_BITS[0]);
        assert_eq!(x[1].to_bits(), REGRESSION_BITS[1]);
    }

    const REGRESSION_BITS: [u64; 2] = [4617853676993332961, 4618817547937382499];

    #[test]
    fn sample_moments() {
        let n = 100_000;
        let c = comp(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = c.sample(&mut rng, n);
        let mean = xs.iter().fold(Point::zeros(2), |a, x| a + x) / n as f64;
        let bound = 4.0 / (n as f64).sqrt();
        assert!(mean.iter().all(|m| m.abs() < bound), "{mean}");

        let c = comp(&[0.0, 0.0], &[4.0, 0.0, 0.0, 4.0]);
        let xs = c.sample(&mut rng, n);
        for i in 0..2 {
            let m = xs.iter().map(|x| x[i]).sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x[i] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((v - 0.25).abs() < 0.01, "{v}");
        }
    }

    #[test]
    fn json_layout() {
        let s = MixtureState::new(
            vec![0.25, 0.75],
            vec![comp(&[1.0, 2.0], &[2.0, 0.5, 0.5, 1.0]), comp(&[0.0, -1.0], &[1.0, 0.0, 0.0, 1.0])],
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(v["means"][0], serde_json::json!([1.0, 2.0]));
        assert_eq!(v["precisions"][0], serde_json::json!([[2.0, 0.5], [0.5, 1.0]]));
        let back = MixtureState::from_json(&s.to_json()).unwrap();
        assert_eq!(back.means(), s.means());
        assert!((back.weights()[0] - 0.25).abs() < 1e-15);
        assert!(MixtureState::from_json(r#"{"weights":[1.0],"means":[[0.0]],"precisions":[[[-1.0]]]}"#).is_err());
    }
}

//! Monte Carlo natural-gradient estimates for the annealed objective.
//!
//! The annealed potential of a mixture `q` at temperature `omega` is
//! `f(x) = l(x) - omega log q(x)`, so that `E_q[f] = E_q[l] + omega H(q)`.
//! Each estimator averages a per-sample quantity over a batch drawn from one
//! component; expectations match the gradients of the annealed objective
//! divided by the component weight.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mixture::{symmetrize, GaussianComponent, MixtureState, Point};
use crate::objectives::{Objective, Tier};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("the estimator needs the {needed} tier but the objective only provides {available}")]
    TierUnavailable { needed: Tier, available: Tier },
    #[error("{samples} samples for {utilities} utility values")]
    LengthMismatch { samples: usize, utilities: usize },
    #[error("invalid utility scheme: {0}")]
    InvalidUtility(String),
    #[error("an estimate needs at least one sample")]
    NoSamples,
}

/// Potential value at one point, with derivatives up to the requested order.
#[derive(Debug, Clone)]
pub struct PotentialEval {
    pub value: f64,
    pub gradient: Option<Point>,
    pub hessian: Option<DMatrix<f64>>,
}

/// `l(x) - omega log q(x)` for a fixed mixture `q`.
#[derive(Debug, Clone, Copy)]
pub struct AnnealedPotential<'a> {
    pub objective: &'a dyn Objective,
    pub omega: f64,
    pub state: &'a MixtureState,
}

impl<'a> AnnealedPotential<'a> {
    pub fn new(objective: &'a dyn Objective, omega: f64, state: &'a MixtureState) -> Self {
        assert!(omega >= 0.0, "temperature must be non-negative");
        Self {
            objective,
            omega,
            state,
        }
    }

    fn require(&self, needed: Tier) -> Result<(), EstimationError> {
        let available = self.objective.tier();
        if available < needed {
            return Err(EstimationError::TierUnavailable { needed, available });
        }
        Ok(())
    }

    /// Evaluates the potential and its first `order` derivatives.
    pub fn evaluate(&self, x: &Point, order: u8) -> Result<PotentialEval, EstimationError> {
        self.evaluate_parts(x, order >= 1, order >= 2)
    }

    /// Evaluates the value and only the requested derivatives.
    pub fn evaluate_parts(&self, x: &Point, with_gradient: bool, with_hessian: bool) -> Result<PotentialEval, EstimationError> {
        let needed = if with_hessian {
            Tier::Hessian
        } else if with_gradient {
            Tier::Gradient
        } else {
            Tier::Value
        };
        self.require(needed)?;
        let l = self.objective.value(x);
        let mut gradient = with_gradient.then(|| self.objective.gradient(x).expect("tier checked"));
        let mut hessian = with_hessian.then(|| self.objective.hessian(x).expect("tier checked"));
        let mut value = l;
        if self.omega > 0.0 {
            let order = if with_hessian { 2 } else { u8::from(with_gradient) };
            let lq = self.state.log_pdf_derivatives(x, order);
            value -= self.omega * lq.value;
            if let (Some(g), Some(gq)) = (gradient.as_mut(), lq.gradient.as_ref()) {
                g.axpy(-self.omega, gq, 1.0);
            }
            if let (Some(h), Some(hq)) = (hessian.as_mut(), lq.hessian.as_ref()) {
                *h -= hq * self.omega;
                symmetrize(h);
            }
        }
        Ok(PotentialEval {
            value,
            gradient,
            hessian,
        })
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.evaluate(x, 0).expect("value tier always available").value
    }

    pub fn gradient(&self, x: &Point) -> Result<Point, EstimationError> {
        Ok(self.evaluate(x, 1)?.gradient.expect("order 1"))
    }

    pub fn hessian(&self, x: &Point) -> Result<DMatrix<f64>, EstimationError> {
        Ok(self.evaluate(x, 2)?.hessian.expect("order 2"))
    }

    fn evaluate_all(&self, samples: &[Point], order: u8) -> Result<Vec<PotentialEval>, EstimationError> {
        samples.iter().map(|x| self.evaluate(x, order)).collect()
    }
}

/// Mean-gradient estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum MuVariant {
    /// Score-function form, values only.
    Score = 0,
    /// Average of potential gradients.
    Gradient = 1,
}

/// Precision-gradient estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SVariant {
    /// Second-order score form, values only.
    Score = 0,
    /// Score times gradient, symmetrized.
    Gradient = 1,
    /// Average of potential Hessians.
    Hessian = 2,
}

impl MuVariant {
    pub fn order(self) -> u8 {
        self as u8
    }

    /// Highest variant available for an objective tier.
    pub fn for_tier(tier: Tier) -> Self {
        if tier >= Tier::Gradient {
            Self::Gradient
        } else {
            Self::Score
        }
    }
}

impl SVariant {
    pub fn order(self) -> u8 {
        self as u8
    }

    pub fn for_tier(tier: Tier) -> Self {
        match tier {
            Tier::Value => Self::Score,
            Tier::Gradient => Self::Gradient,
            Tier::Hessian => Self::Hessian,
        }
    }
}

impl From<MuVariant> for u8 {
    fn from(v: MuVariant) -> u8 {
        v as u8
    }
}

impl From<SVariant> for u8 {
    fn from(v: SVariant) -> u8 {
        v as u8
    }
}

impl TryFrom<u8> for MuVariant {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Self::Score),
            1 => Ok(Self::Gradient),
            _ => Err(format!("mu_variant must be 0 or 1, got {v}")),
        }
    }
}

impl TryFrom<u8> for SVariant {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Self::Score),
            1 => Ok(Self::Gradient),
            2 => Ok(Self::Hessian),
            _ => Err(format!("s_variant must be 0, 1 or 2, got {v}")),
        }
    }
}

/// Per-component estimates for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// One entry per logit, `k < K`.
    pub pi: Vec<f64>,
    pub mu: Vec<Point>,
    pub prec: Vec<DMatrix<f64>>,
    pub samples_used: usize,
}

/// `(1/B) sum_b [f(x_b^k) - f(x_b^K)]` from already evaluated potentials.
pub fn grad_pi_from_values(values_k: &[f64], values_last: &[f64]) -> f64 {
    assert_eq!(values_k.len(), values_last.len(), "paired batches must have equal size");
    let b = values_k.len() as f64;
    values_k.iter().zip(values_last).map(|(a, c)| a - c).sum::<f64>() / b
}

/// Logit gradient estimate for component `k` against the last component.
pub fn estimate_grad_pi(
    ap: &AnnealedPotential<'_>,
    samples_k: &[Point],
    samples_last: &[Point],
) -> Result<f64, EstimationError> {
    if samples_k.is_empty() {
        return Err(EstimationError::NoSamples);
    }
    let a: Vec<f64> = samples_k.iter().map(|x| ap.value(x)).collect();
    let c: Vec<f64> = samples_last.iter().map(|x| ap.value(x)).collect();
    Ok(grad_pi_from_values(&a, &c))
}

/// Mean-gradient estimate from evaluated samples of `component`.
pub fn grad_mu_from_evals(
    component: &GaussianComponent,
    samples: &[Point],
    evals: &[PotentialEval],
    variant: MuVariant,
) -> Point {
    let b = samples.len() as f64;
    let d = component.dim();
    match variant {
        MuVariant::Score => {
            let mut acc = Point::zeros(d);
            for (x, e) in samples.iter().zip(evals) {
                acc.axpy(e.value, &(x - component.mean()), 1.0);
            }
            component.precision() * acc / b
        }
        MuVariant::Gradient => {
            let mut acc = Point::zeros(d);
            for e in evals {
                acc += e.gradient.as_ref().expect("gradient evaluated");
            }
            acc / b
        }
    }
}

/// Precision-gradient estimate from evaluated samples of `component`. Symmetric.
pub fn grad_prec_from_evals(
    component: &GaussianComponent,
    samples: &[Point],
    evals: &[PotentialEval],
    variant: SVariant,
) -> DMatrix<f64> {
    let b = samples.len() as f64;
    let d = component.dim();
    let s = component.precision();
    let mut out = match variant {
        SVariant::Score => {
            let mut acc = DMatrix::zeros(d, d);
            let mut fsum = 0.0;
            for (x, e) in samples.iter().zip(evals) {
                let sd = s * (x - component.mean());
                acc += &sd * sd.transpose() * e.value;
                fsum += e.value;
            }
            (acc - s * fsum) / b
        }
        SVariant::Gradient => {
            let mut acc = DMatrix::zeros(d, d);
            for (x, e) in samples.iter().zip(evals) {
                acc += (x - component.mean()) * e.gradient.as_ref().expect("gradient evaluated").transpose();
            }
            s * acc / b
        }
        SVariant::Hessian => {
            let mut acc = DMatrix::zeros(d, d);
            for e in evals {
                acc += e.hessian.as_ref().expect("hessian evaluated");
            }
            acc / b
        }
    };
    symmetrize(&mut out);
    out
}

/// Mean-gradient estimate for component `k` from its batch.
pub fn estimate_grad_mu(
    ap: &AnnealedPotential<'_>,
    k: usize,
    samples: &[Point],
    variant: MuVariant,
) -> Result<Point, EstimationError> {
    if samples.is_empty() {
        return Err(EstimationError::NoSamples);
    }
    let evals = ap.evaluate_all(samples, variant.order())?;
    Ok(grad_mu_from_evals(ap.state.component(k), samples, &evals, variant))
}

/// Precision-gradient estimate for component `k` from its batch.
pub fn estimate_grad_prec(
    ap: &AnnealedPotential<'_>,
    k: usize,
    samples: &[Point],
    variant: SVariant,
) -> Result<DMatrix<f64>, EstimationError> {
    if samples.is_empty() {
        return Err(EstimationError::NoSamples);
    }
    let evals = ap.evaluate_all(samples, variant.order())?;
    Ok(grad_prec_from_evals(ap.state.component(k), samples, &evals, variant))
}

/// Non-increasing utility values assigned to ranked samples.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityScheme {
    pub values: Vec<f64>,
}

impl UtilityScheme {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Declarative utility choice, resolved against a batch size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum UtilitySpec {
    Truncation { eta: f64 },
    Cmaes {
        #[serde(rename = "B0")]
        b0: usize,
    },
}

impl UtilitySpec {
    pub fn build(&self, b: usize) -> Result<UtilityScheme, EstimationError> {
        match *self {
            UtilitySpec::Truncation { eta } => utility_truncation(b, eta),
            UtilitySpec::Cmaes { b0 } => utility_cmaes(b, b0),
        }
    }
}

/// Uniform weight `B / B0` on the best `B0 = floor(B eta + 1/2)` samples.
pub fn utility_truncation(b: usize, eta: f64) -> Result<UtilityScheme, EstimationError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(EstimationError::InvalidUtility(format!("eta must lie in (0, 1], got {eta}")));
    }
    let b0 = (b as f64 * eta + 0.5).floor() as usize;
    if b0 == 0 {
        return Err(EstimationError::InvalidUtility(format!("B = {b} with eta = {eta} selects no sample")));
    }
    let u = b as f64 / b0 as f64;
    Ok(UtilityScheme {
        values: (0..b).map(|i| if i < b0 { u } else { 0.0 }).collect(),
    })
}

/// Log-rank weights on the best `B0` samples, scaled to sum to `B`.
pub fn utility_cmaes(b: usize, b0: usize) -> Result<UtilityScheme, EstimationError> {
    if b0 == 0 || b0 > b {
        return Err(EstimationError::InvalidUtility(format!("need 1 <= B0 <= B, got B0 = {b0}, B = {b}")));
    }
    let top = ((b0 + 1) as f64).ln();
    let raw: Vec<f64> = (1..=b0).map(|i| top - (i as f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    let mut values: Vec<f64> = raw.iter().map(|r| b as f64 * r / total).collect();
    values.resize(b, 0.0);
    Ok(UtilityScheme { values })
}

/// Indices of `values` sorted descending; ties keep the lower index first.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

/// Fitness-shaped estimates from evaluated potential values.
pub fn fs_from_values(
    component: &GaussianComponent,
    samples: &[Point],
    values: &[f64],
    u: &UtilityScheme,
) -> Result<(Point, DMatrix<f64>), EstimationError> {
    if samples.len() != u.len() || values.len() != u.len() {
        return Err(EstimationError::LengthMismatch {
            samples: samples.len(),
            utilities: u.len(),
        });
    }
    let b = samples.len() as f64;
    let d = component.dim();
    let s = component.precision();
    let order = rank_descending(values);
    let mut mu_acc = Point::zeros(d);
    let mut outer = DMatrix::zeros(d, d);
    let mut usum = 0.0;
    for (&i, &ub) in order.iter().zip(&u.values) {
        if ub == 0.0 {
            continue;
        }
        let diff = &samples[i] - component.mean();
        mu_acc.axpy(ub, &diff, 1.0);
        let sd = s * &diff;
        outer += &sd * sd.transpose() * ub;
        usum += ub;
    }
    let nu_mu = s * mu_acc / b;
    let mut nu_s = (outer - s * usum) / b;
    symmetrize(&mut nu_s);
    Ok((nu_mu, nu_s))
}

/// Ranks the batch by potential value and returns the shaped mean and precision estimates.
pub fn fs_estimate(
    ap: &AnnealedPotential<'_>,
    k: usize,
    samples: &[Point],
    u: &UtilityScheme,
) -> Result<(Point, DMatrix<f64>), EstimationError> {
    let values: Vec<f64> = samples.iter().map(|x| ap.value(x)).collect();
    fs_from_values(ap.state.component(k), samples, &values, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{finite_diff_grad, make_quadratic};

    fn state2() -> MixtureState {
        MixtureState::new(
            vec![0.4, 0.6],
            vec![
                GaussianComponent::new(Point::from_row_slice(&[0.5, -0.2]), DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]))
                    .unwrap(),
                GaussianComponent::new(Point::from_row_slice(&[-1.0, 1.0]), DMatrix::identity(2, 2) * 3.0).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_temperature_is_objective() {
        let q = make_quadratic(Point::from_row_slice(&[1.0, 1.0]), DMatrix::identity(2, 2)).unwrap();
        let s = state2();
        let ap = AnnealedPotential::new(&q, 0.0, &s);
        let x = Point::from_row_slice(&[0.3, -2.0]);
        assert_eq!(ap.value(&x), q.value(&x));
    }

    #[test]
    fn single_gaussian_potential_hessian() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let q = make_quadratic(Point::zeros(2), a.clone()).unwrap();
        let prec = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.7]);
        let s = MixtureState::uniform(vec![GaussianComponent::new(Point::from_row_slice(&[0.1, 0.2]), prec.clone()).unwrap()])
            .unwrap();
        let ap = AnnealedPotential::new(&q, 0.3, &s);
        let h = ap.hessian(&Point::from_row_slice(&[1.0, -1.0])).unwrap();
        assert!((h - (-&a + prec * 0.3)).amax() < 1e-12);
    }

    #[test]
    fn potential_gradient_matches_fd() {
        let q = make_quadratic(Point::from_row_slice(&[1.0, 1.0]), DMatrix::identity(2, 2)).unwrap();
        let s = state2();
        let ap = AnnealedPotential::new(&q, 0.7, &s);
        let x = Point::from_row_slice(&[0.2, 0.4]);
        let fd = finite_diff_grad(&|p: &Point| ap.value(p), &x, 1e-5);
        let g = ap.gradient(&x).unwrap();
        assert!((&fd - &g).norm() / g.norm() < 1e-5);
    }

    #[test]
    fn identical_pairs_give_zero() {
        let q = make_quadratic(Point::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let s = state2();
        let ap = AnnealedPotential::new(&q, 0.5, &s);
        let xs = vec![Point::from_row_slice(&[0.1, 0.2]), Point::from_row_slice(&[-0.3, 0.9])];
        assert_eq!(estimate_grad_pi(&ap, &xs, &xs).unwrap(), 0.0);
    }

    #[test]
    fn utilities() {
        assert_eq!(utility_truncation(4, 0.5).unwrap().values, vec![2.0, 2.0, 0.0, 0.0]);
        assert_eq!(utility_truncation(7, 1.0).unwrap().values, vec![1.0; 7]);
        assert!(utility_truncation(4, 0.1).is_err());
        let u = utility_cmaes(4, 2).unwrap().values;
        assert!((u[0] - 2.921_690_8).abs() < 1e-6 && (u[1] - 1.078_309_2).abs() < 1e-6);
        assert!((u[0] - 2.9214).abs() < 5e-4 && (u[1] - 1.0786).abs() < 5e-4);
        assert_eq!(&u[2..], &[0.0, 0.0]);
        for (b, b0) in [(16, 4), (10, 10), (5, 1)] {
            let s: f64 = utility_cmaes(b, b0).unwrap().values.iter().sum();
            assert!((s - b as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn ranking() {
        assert_eq!(rank_descending(&[1.0, 3.0, 2.0]), vec![1, 2, 0]);
        assert_eq!(rank_descending(&[5.0; 4]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn variant_round_trip() {
        assert_eq!(serde_json::to_string(&SVariant::Hessian).unwrap(), "2");
        assert_eq!(serde_json::from_str::<MuVariant>("1").unwrap(), MuVariant::Gradient);
        assert!(serde_json::from_str::<SVariant>("3").is_err());
    }
}

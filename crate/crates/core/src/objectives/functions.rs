//! Closed-form test objectives.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{mixture_from_covariances, mode_at, refine_mode, Domain, ModeSpec, Objective, ObjectiveError, Problem, Tier};
use crate::mixture::{cholesky_lower, symmetrize, MixtureState, Point};

/// Component variance of the symmetric three-Gaussian target.
pub const SYM_GMM_VARIANCE: f64 = 0.54;

/// `-(x - m)^T A (x - m) / 2`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub center: Point,
    pub matrix: DMatrix<f64>,
}

impl Quadratic {
    /// `E[l(x)]` for `x ~ N(mean, covariance)`.
    pub fn expectation(&self, mean: &Point, covariance: &DMatrix<f64>) -> f64 {
        let diff = mean - &self.center;
        -0.5 * ((&self.matrix * &diff).dot(&diff) + (&self.matrix * covariance).trace())
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn tier(&self) -> Tier {
        Tier::Hessian
    }

    fn value(&self, x: &Point) -> f64 {
        let diff = x - &self.center;
        -0.5 * (&self.matrix * &diff).dot(&diff)
    }

    fn gradient(&self, x: &Point) -> Option<Point> {
        Some(&self.matrix * (&self.center - x))
    }

    fn hessian(&self, _x: &Point) -> Option<DMatrix<f64>> {
        Some(-&self.matrix)
    }
}

/// Quadratic objective with maximum 0 at `center`.
pub fn make_quadratic(center: Point, matrix: DMatrix<f64>) -> Result<Quadratic, ObjectiveError> {
    let mut matrix = matrix;
    symmetrize(&mut matrix);
    if matrix.nrows() != center.len() || cholesky_lower(&matrix).is_none() {
        return Err(ObjectiveError::Invalid("quadratic matrix must be positive definite and match the center".into()));
    }
    Ok(Quadratic { center, matrix })
}

/// Log-density of a Gaussian mixture.
#[derive(Debug, Clone)]
pub struct GmmObjective {
    pub mixture: MixtureState,
}

impl Objective for GmmObjective {
    fn dim(&self) -> usize {
        self.mixture.dim()
    }

    fn tier(&self) -> Tier {
        Tier::Hessian
    }

    fn value(&self, x: &Point) -> f64 {
        self.mixture.log_pdf(x)
    }

    fn gradient(&self, x: &Point) -> Option<Point> {
        self.mixture.log_pdf_derivatives(x, 1).gradient
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        self.mixture.log_pdf_derivatives(x, 2).hessian
    }
}

/// Log-density objective of the mixture `sum_k w_k N(m_k, C_k)`.
pub fn make_gmm_objective(
    weights: &[f64],
    means: &[Point],
    covariances: &[DMatrix<f64>],
) -> Result<GmmObjective, ObjectiveError> {
    Ok(GmmObjective {
        mixture: mixture_from_covariances(weights, means, covariances)?,
    })
}

fn gmm_problem(id: &str, gmm: GmmObjective, starts: &[(Point, bool)]) -> Problem {
    let modes = starts
        .iter()
        .map(|(s, global)| {
            let x = refine_mode(&gmm, s).expect("mixture modes refine from nearby starts");
            mode_at(&gmm, x, *global)
        })
        .collect();
    Problem::new(id, Arc::new(gmm), modes)
}

/// Three isotropic Gaussians on the unit circle, 120 degrees apart.
///
/// Three global modes near `0.511 gamma_k` and a local mode at the origin.
pub fn make_symmetric_gmm() -> Problem {
    let centers: Vec<Point> = (1..=3)
        .map(|k| {
            let a = PI / 2.0 + 2.0 * k as f64 * PI / 3.0;
            Point::from_row_slice(&[a.sin(), a.cos()])
        })
        .collect();
    let cov = DMatrix::identity(2, 2) * SYM_GMM_VARIANCE;
    let gmm = make_gmm_objective(&[1.0 / 3.0; 3], &centers, &[cov.clone(), cov.clone(), cov])
        .expect("valid mixture");
    let mut starts: Vec<(Point, bool)> = centers.iter().map(|c| (c * 0.511, true)).collect();
    starts.push((Point::zeros(2), false));
    let mut p = gmm_problem("sym-gmm", gmm, &starts);
    p.domain = Some(Domain::cube(2, -2.0, 2.0));
    p
}

/// Three axis-aligned Gaussians with equal peak heights at `(-1, 0)` and
/// `(1, 0)` and a low local bump at the origin.
pub fn make_asymmetric_gmm() -> Problem {
    let det_pow = |a: f64, b: f64| (a * b).powf(-0.5);
    let d1 = det_pow(0.03, 0.3);
    let d3 = det_pow(0.005, 0.9);
    let w1 = 0.9 * d3 / (d1 + d3);
    let w2 = 0.1;
    let w3 = 1.0 - w1 - w2;
    let means = [
        Point::from_row_slice(&[-1.0, 0.0]),
        Point::from_row_slice(&[0.0, 0.0]),
        Point::from_row_slice(&[1.0, 0.0]),
    ];
    let covs = [
        DMatrix::from_diagonal(&Point::from_row_slice(&[0.03, 0.3])),
        DMatrix::from_diagonal(&Point::from_row_slice(&[0.3, 0.6])),
        DMatrix::from_diagonal(&Point::from_row_slice(&[0.005, 0.9])),
    ];
    let gmm = make_gmm_objective(&[w1, w2, w3], &means, &covs).expect("valid mixture");
    let starts = [(means[0].clone(), true), (means[1].clone(), false), (means[2].clone(), true)];
    let mut p = gmm_problem("asym-gmm", gmm, &starts);
    p.domain = Some(Domain::cube(2, -2.0, 2.0));
    p
}

/// Negated, halved Styblinski-Tang function.
#[derive(Debug, Clone)]
pub struct StyblinskiTang {
    pub d: usize,
}

impl Objective for StyblinskiTang {
    fn dim(&self) -> usize {
        self.d
    }

    fn tier(&self) -> Tier {
        Tier::Hessian
    }

    fn value(&self, x: &Point) -> f64 {
        -0.5 * x.iter().map(|v| v.powi(4) - 16.0 * v * v + 5.0 * v).sum::<f64>()
    }

    fn gradient(&self, x: &Point) -> Option<Point> {
        Some(x.map(|v| -0.5 * (4.0 * v.powi(3) - 32.0 * v + 5.0)))
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&x.map(|v| 16.0 - 6.0 * v * v)))
    }
}

/// The three real roots of `4x^3 - 32x + 5`, ascending.
pub fn styblinski_tang_roots() -> [f64; 3] {
    let p = |x: f64| 4.0 * x.powi(3) - 32.0 * x + 5.0;
    let dp = |x: f64| 12.0 * x * x - 32.0;
    [-3.0, 0.0, 3.0].map(|mut x| {
        for _ in 0..60 {
            let step = p(x) / dp(x);
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x
    })
}

/// Styblinski-Tang in `d` dimensions. All `2^d` corner combinations of the two
/// per-coordinate maximizers are modes; the global one sits at `(x1, ..., x1)`.
pub fn make_styblinski_tang(d: usize) -> Problem {
    assert!(d >= 1 && d <= 20, "dimension out of range");
    let [x1, _, x2] = styblinski_tang_roots();
    let st = StyblinskiTang { d };
    let modes = (0..(1usize << d))
        .map(|mask| {
            let loc = Point::from_fn(d, |i, _| if mask >> i & 1 == 0 { x1 } else { x2 });
            mode_at(&st, loc, mask == 0)
        })
        .collect();
    let mut p = Problem::new(format!("styblinski-tang-{d}"), Arc::new(st), modes);
    p.domain = Some(Domain::cube(d, -4.0, 4.0));
    p
}

/// The piecewise profile `psi` with a flat maximum at `-3` and a quadratic one at `3`.
pub fn psi(x: f64) -> (f64, f64) {
    if x < -2.0 {
        let u = x + 3.0;
        (-u.powi(4) - 1.0, -4.0 * u.powi(3))
    } else if x <= 2.0 {
        (
            -x.powi(3) / 8.0 + 0.75 * x * x + 0.5 * x - 5.0,
            -3.0 * x * x / 8.0 + 1.5 * x + 0.5,
        )
    } else {
        let u = x - 3.0;
        (-u * u - 1.0, -2.0 * u)
    }
}

#[derive(Debug, Clone)]
struct DegeneratePsi;

impl Objective for DegeneratePsi {
    fn dim(&self) -> usize {
        2
    }

    fn tier(&self) -> Tier {
        Tier::Gradient
    }

    fn value(&self, x: &Point) -> f64 {
        psi(x[0]).0 * (x[1] * x[1] + 1.0)
    }

    fn gradient(&self, x: &Point) -> Option<Point> {
        let (v, dv) = psi(x[0]);
        Some(Point::from_row_slice(&[dv * (x[1] * x[1] + 1.0), 2.0 * x[1] * v]))
    }
}

/// `psi(x1) (x2^2 + 1)`: two global modes, `(-3, 0)` degenerate and `(3, 0)` not.
pub fn make_degenerate_psi() -> Problem {
    let obj = DegeneratePsi;
    let hess = |x0: f64| {
        let (v, _) = psi(x0);
        let d2 = if x0 < -2.0 {
            -12.0 * (x0 + 3.0).powi(2)
        } else if x0 <= 2.0 {
            -0.75 * x0 + 1.5
        } else {
            -2.0
        };
        DMatrix::from_row_slice(2, 2, &[d2, 0.0, 0.0, 2.0 * v])
    };
    let modes = [-3.0, 3.0]
        .iter()
        .map(|&x0| ModeSpec {
            location: Point::from_row_slice(&[x0, 0.0]),
            is_global: true,
            hessian: Some(hess(x0)),
            value: obj.value(&Point::from_row_slice(&[x0, 0.0])),
        })
        .collect();
    let mut p = Problem::new("degenerate-psi", Arc::new(obj), modes);
    p.domain = Some(Domain::new(vec![-5.0, -2.0], vec![5.0, 2.0]));
    p
}

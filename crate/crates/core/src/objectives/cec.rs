//! Niching benchmark functions F1-F6 and the pyramidal extension that poses
//! them on the whole space.

use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{refine_mode, Domain, ModeSpec, Objective, Problem, Tier};
use crate::mixture::Point;

/// `f(a + r) - |q|_1 A` where `x - a = q (b - a) + r` coordinatewise with `0 <= r < b - a`.
///
/// The result is continuous inside each cell and decreases by `A` per cell
/// step away from the original rectangle, so the rectangle holds every maximum.
#[derive(Debug, Clone)]
pub struct PyramidalExtension {
    inner: Arc<dyn Objective>,
    lo: Point,
    width: Point,
    range: f64,
}

impl PyramidalExtension {
    pub fn range(&self) -> f64 {
        self.range
    }

    /// Cell index `q` and offset `r` of `x`.
    pub fn decompose(&self, x: &Point) -> (Vec<i64>, Point) {
        let mut q = Vec::with_capacity(x.len());
        let mut r = Point::zeros(x.len());
        for i in 0..x.len() {
            let w = self.width[i];
            let shifted = x[i] - self.lo[i];
            let mut qi = (shifted / w).floor();
            let mut ri = shifted - qi * w;
            if ri >= w {
                ri -= w;
                qi += 1.0;
            }
            if ri < 0.0 {
                ri = 0.0;
            }
            q.push(qi as i64);
            r[i] = ri;
        }
        (q, r)
    }
}

impl Objective for PyramidalExtension {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn tier(&self) -> Tier {
        Tier::Value
    }

    fn value(&self, x: &Point) -> f64 {
        let (q, r) = self.decompose(x);
        let l1: f64 = q.iter().map(|v| v.unsigned_abs() as f64).sum();
        self.inner.value(&(&self.lo + r)) - l1 * self.range
    }
}

/// Extends `f`, defined on `[lo, hi]`, to the whole space. `range` is
/// `max f - min f` over the rectangle.
pub fn pyramidal_extend(f: Arc<dyn Objective>, lo: Point, hi: Point, range: f64) -> PyramidalExtension {
    assert!(lo.iter().zip(hi.iter()).all(|(a, b)| a < b), "empty rectangle");
    let width = &hi - &lo;
    PyramidalExtension {
        inner: f,
        lo,
        width,
        range,
    }
}

/// Scores with the raw function on the closed rectangle and the extension outside.
#[derive(Debug, Clone)]
struct CecScoring {
    raw: CecFunction,
    extended: PyramidalExtension,
    domain: Domain,
}

impl Objective for CecScoring {
    fn dim(&self) -> usize {
        self.raw.dim()
    }

    fn tier(&self) -> Tier {
        Tier::Value
    }

    fn value(&self, x: &Point) -> f64 {
        if self.domain.contains(x) {
            self.raw.value(x)
        } else {
            self.extended.value(x)
        }
    }
}

/// The six niching functions, all maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CecFunction {
    /// Five-uneven-peak trap on `[0, 30]`.
    F1,
    /// Equal maxima `sin^6(5 pi x)` on `[0, 1]`.
    F2,
    /// Uneven decreasing maxima on `[0, 1]`.
    F3,
    /// Himmelblau on `[-6, 6]^2`.
    F4,
    /// Six-hump camel back on `[-1.9, 1.9] x [-1.1, 1.1]`.
    F5,
    /// Shubert on `[-10, 10]^2`.
    F6,
}

fn shubert_1d(x: f64) -> (f64, f64, f64) {
    let mut g = 0.0;
    let mut dg = 0.0;
    let mut d2g = 0.0;
    for j in 1..=5 {
        let j = j as f64;
        let arg = (j + 1.0) * x + j;
        g += j * arg.cos();
        dg -= j * (j + 1.0) * arg.sin();
        d2g -= j * (j + 1.0) * (j + 1.0) * arg.cos();
    }
    (g, dg, d2g)
}

impl CecFunction {
    pub const ALL: [CecFunction; 6] = [Self::F1, Self::F2, Self::F3, Self::F4, Self::F5, Self::F6];

    pub fn index(self) -> usize {
        self as usize + 1
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i.checked_sub(1)?).copied()
    }

    pub fn domain(self) -> Domain {
        match self {
            Self::F1 => Domain::new(vec![0.0], vec![30.0]),
            Self::F2 | Self::F3 => Domain::new(vec![0.0], vec![1.0]),
            Self::F4 => Domain::cube(2, -6.0, 6.0),
            Self::F5 => Domain::new(vec![-1.9, -1.1], vec![1.9, 1.1]),
            Self::F6 => Domain::cube(2, -10.0, 10.0),
        }
    }

    /// Number of global modes.
    pub fn n_global(self) -> usize {
        [2, 5, 1, 4, 2, 18][self as usize]
    }

    /// Published evaluation budget.
    pub fn budget(self) -> u64 {
        [16_000, 320_000, 64_000, 130_000, 64_000, 580_000][self as usize]
    }

    fn analytic_range(self) -> Option<f64> {
        match self {
            Self::F1 => Some(200.0),
            Self::F2 => Some(1.0),
            Self::F4 => Some(2186.0),
            _ => None,
        }
    }

    /// `max f - min f` over the rectangle: analytic where known, otherwise a
    /// `1001^d` grid for the minimum and the known global value for the maximum.
    pub fn range(self, global_value: f64) -> f64 {
        if let Some(a) = self.analytic_range() {
            return a;
        }
        let dom = self.domain();
        let d = dom.lo.len();
        let n = 1001usize;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut x = Point::zeros(d);
        let total = n.pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            for i in 0..d {
                let k = rem % n;
                rem /= n;
                x[i] = dom.lo[i] + (dom.hi[i] - dom.lo[i]) * k as f64 / (n - 1) as f64;
            }
            let v = self.value(&x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi.max(global_value) - lo
    }

    fn starts(self) -> Vec<Point> {
        let p1 = |v: f64| Point::from_row_slice(&[v]);
        let p2 = |a: f64, b: f64| Point::from_row_slice(&[a, b]);
        match self {
            Self::F1 => vec![],
            Self::F2 => (0..5).map(|i| p1(0.1 + 0.2 * i as f64)).collect(),
            Self::F3 => (0..5).map(|i| p1((0.15 + 0.2 * i as f64).powf(4.0 / 3.0))).collect(),
            Self::F4 => vec![p2(3.0, 2.0), p2(-2.8, 3.1), p2(-3.8, -3.3), p2(3.6, -1.8)],
            Self::F5 => vec![
                p2(0.09, -0.71),
                p2(-0.09, 0.71),
                p2(-1.70, 0.80),
                p2(1.70, -0.80),
                p2(-1.61, -0.57),
                p2(1.61, 0.57),
            ],
            Self::F6 => vec![],
        }
    }

    /// Global and local maxima inside the rectangle.
    pub fn modes(self) -> Vec<ModeSpec> {
        let spec = |x: Point, is_global: bool, f: &CecFunction| ModeSpec {
            value: f.value(&x),
            hessian: f.hessian(&x),
            location: x,
            is_global,
        };
        match self {
            Self::F1 => [0.0, 30.0, 5.0, 12.5, 22.5]
                .iter()
                .enumerate()
                .map(|(i, &x)| ModeSpec {
                    location: Point::from_row_slice(&[x]),
                    is_global: i < 2,
                    hessian: None,
                    value: self.value(&Point::from_row_slice(&[x])),
                })
                .collect(),
            Self::F6 => shubert_modes().into_iter().map(|x| spec(x, true, &self)).collect(),
            _ => {
                let found: Vec<Point> = self
                    .starts()
                    .iter()
                    .map(|s| refine_mode(&self, s).expect("benchmark mode refines"))
                    .collect();
                let best = found.iter().map(|x| self.value(x)).fold(f64::NEG_INFINITY, f64::max);
                found
                    .into_iter()
                    .map(|x| {
                        let global = self.value(&x) > best - 1e-6;
                        spec(x, global, &self)
                    })
                    .collect()
            }
        }
    }
}

/// Global maxima of the 2-D Shubert function: one coordinate at a global
/// maximizer of the 1-D sum and the other at a global minimizer.
fn shubert_modes() -> Vec<Point> {
    let n = 20_001;
    let grid: Vec<f64> = (0..n).map(|i| -10.0 + 20.0 * i as f64 / (n - 1) as f64).collect();
    let mut extrema = Vec::new();
    for w in grid.windows(2) {
        let (_, d0, _) = shubert_1d(w[0]);
        let (_, d1, _) = shubert_1d(w[1]);
        if d0.signum() != d1.signum() {
            let mut x = 0.5 * (w[0] + w[1]);
            for _ in 0..50 {
                let (_, dg, d2g) = shubert_1d(x);
                let step = dg / d2g;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            extrema.push(x);
        }
    }
    let vals: Vec<f64> = extrema.iter().map(|&x| shubert_1d(x).0).collect();
    let gmax = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let gmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let pick = |target: f64| -> Vec<f64> {
        let mut xs: Vec<f64> = extrema
            .iter()
            .zip(&vals)
            .filter(|(x, v)| (**v - target).abs() < 1e-9 && x.abs() <= 10.0)
            .map(|(x, _)| *x)
            .collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        xs
    };
    let maxs = pick(gmax);
    let mins = pick(gmin);
    let mut out = Vec::new();
    for &a in &maxs {
        for &b in &mins {
            out.push(Point::from_row_slice(&[a, b]));
            out.push(Point::from_row_slice(&[b, a]));
        }
    }
    out
}

impl Objective for CecFunction {
    fn dim(&self) -> usize {
        match self {
            Self::F1 | Self::F2 | Self::F3 => 1,
            _ => 2,
        }
    }

    fn tier(&self) -> Tier {
        match self {
            Self::F1 => Tier::Value,
            _ => Tier::Gradient,
        }
    }

    fn value(&self, x: &Point) -> f64 {
        match self {
            Self::F1 => {
                let v = x[0];
                if v < 2.5 {
                    80.0 * (2.5 - v)
                } else if v < 5.0 {
                    64.0 * (v - 2.5)
                } else if v < 7.5 {
                    64.0 * (7.5 - v)
                } else if v < 12.5 {
                    28.0 * (v - 7.5)
                } else if v < 17.5 {
                    28.0 * (17.5 - v)
                } else if v < 22.5 {
                    32.0 * (v - 17.5)
                } else if v < 27.5 {
                    32.0 * (27.5 - v)
                } else {
                    80.0 * (v - 27.5)
                }
            }
            Self::F2 => (5.0 * PI * x[0]).sin().powi(6),
            Self::F3 => {
                let v = x[0];
                let env = (-2.0 * LN_2 * ((v - 0.08) / 0.854).powi(2)).exp();
                env * (5.0 * PI * (v.powf(0.75) - 0.05)).sin().powi(6)
            }
            Self::F4 => {
                let (a, b) = (x[0], x[1]);
                200.0 - (a * a + b - 11.0).powi(2) - (a + b * b - 7.0).powi(2)
            }
            Self::F5 => {
                let (a, b) = (x[0], x[1]);
                let a2 = a * a;
                -4.0 * ((4.0 - 2.1 * a2 + a2 * a2 / 3.0) * a2 + a * b + (4.0 * b * b - 4.0) * b * b)
            }
            Self::F6 => -shubert_1d(x[0]).0 * shubert_1d(x[1]).0,
        }
    }

    fn gradient(&self, x: &Point) -> Option<Point> {
        let g = match self {
            Self::F1 => return None,
            Self::F2 => {
                let t = 5.0 * PI * x[0];
                vec![30.0 * PI * t.sin().powi(5) * t.cos()]
            }
            Self::F3 => {
                let v = x[0];
                let env = (-2.0 * LN_2 * ((v - 0.08) / 0.854).powi(2)).exp();
                let denv = env * (-4.0 * LN_2 * (v - 0.08) / (0.854 * 0.854));
                let t = 5.0 * PI * (v.powf(0.75) - 0.05);
                let s6 = t.sin().powi(6);
                let ds6 = 6.0 * t.sin().powi(5) * t.cos() * 5.0 * PI * 0.75 * v.powf(-0.25);
                vec![denv * s6 + env * ds6]
            }
            Self::F4 => {
                let (a, b) = (x[0], x[1]);
                let p = a * a + b - 11.0;
                let q = a + b * b - 7.0;
                vec![-(4.0 * a * p + 2.0 * q), -(2.0 * p + 4.0 * b * q)]
            }
            Self::F5 => {
                let (a, b) = (x[0], x[1]);
                vec![
                    -4.0 * (8.0 * a - 8.4 * a.powi(3) + 2.0 * a.powi(5) + b),
                    -4.0 * (a - 8.0 * b + 16.0 * b.powi(3)),
                ]
            }
            Self::F6 => {
                let (g0, d0, _) = shubert_1d(x[0]);
                let (g1, d1, _) = shubert_1d(x[1]);
                vec![-d0 * g1, -g0 * d1]
            }
        };
        Some(Point::from_vec(g))
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        match self {
            Self::F6 => {
                let (g0, d0, h0) = shubert_1d(x[0]);
                let (g1, d1, h1) = shubert_1d(x[1]);
                Some(DMatrix::from_row_slice(2, 2, &[-h0 * g1, -d0 * d1, -d0 * d1, -g0 * h1]))
            }
            _ => None,
        }
    }
}

/// One benchmark problem: the pyramid-extended function, its modes and budget.
pub fn cec_problem(f: CecFunction) -> Problem {
    let dom = f.domain();
    let modes = f.modes();
    let global_value = modes.iter().map(|m| m.value).fold(f64::NEG_INFINITY, f64::max);
    let range = f.range(global_value);
    let raw: Arc<dyn Objective> = Arc::new(f);
    let extended = pyramidal_extend(raw, dom.lo.clone(), dom.hi.clone(), range);
    let scoring = CecScoring {
        raw: f,
        extended: extended.clone(),
        domain: dom.clone(),
    };
    let mut p = Problem::new(format!("cec-f{}", f.index()), Arc::new(extended), modes);
    p.domain = Some(dom);
    p.budget = Some(f.budget());
    p.scoring = Some(Arc::new(scoring));
    p
}

/// All six benchmark problems, F1 first.
pub fn make_cec_suite() -> Vec<Problem> {
    CecFunction::ALL.iter().map(|f| cec_problem(*f)).collect()
}

//! Acceptance criteria. Every test prints one `PASS`/`FAIL` line with the
//! measured numbers and the pinned tolerance. A `FAIL` is a reported result,
//! not a test failure; only internal errors (aborted runs, bad configs) panic.
//!
//! The lines are written to the raw stdout handle so they survive the test
//! harness's output capture.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use nva::bench::{run_benchmark, BenchOutcome, MetricsReport};
use nva::estimation::{
    fs_estimate, grad_mu_from_evals, grad_pi_from_values, grad_prec_from_evals, utility_cmaes, AnnealedPotential,
    MuVariant, SVariant,
};
use nva::experiment::{preset, resolve_problem};
use nva::mixture::{
    approx_mixture_entropy, limit_weights, mixture_logpdf, mixture_logpdf_grad, mixture_logpdf_hess, GaussianComponent,
    MixtureState, Point,
};
use nva::objectives::{
    finite_diff_grad, finite_diff_jacobian, make_quadratic, Objective, Problem, Quadratic, Tier, FD_GRAD_STEP,
    FD_HESS_STEP,
};
use nva::optimizers::{run, Algorithm, RunConfig, Schedule};

fn emit(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n:>2}: {verdict}  {detail}").expect("stdout");
    out.flush().expect("stdout");
}

/// Runs `h` replicates of preset `name` at `k` components.
fn bench_preset(name: &str, k: Option<usize>, h: usize) -> (Problem, BenchOutcome) {
    let cfg = preset(name).expect("preset");
    let problem = resolve_problem(&cfg.problem).expect("problem");
    let rc = cfg.run_config(&problem, k.unwrap_or(cfg.k)).expect("run config");
    let rule = cfg.detection_rule(&problem);
    let out = run_benchmark(&problem, &rc, h, &rule, 0).expect("benchmark");
    assert!(out.report.failures.is_empty(), "{name}: aborted replicates {:?}", out.report.failures);
    (problem, out)
}

fn metrics(r: &MetricsReport) -> String {
    format!("gpr={:.3} apr={:.3} gsr={:.3}", r.gpr, r.apr, r.gsr)
}

fn nearest_mode(problem: &Problem, x: &Point) -> usize {
    problem
        .modes
        .iter()
        .enumerate()
        .map(|(j, m)| (j, (&m.location - x).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| j)
        .expect("problem lists modes")
}

/// Final weight summed over the components nearest to each mode.
fn weight_per_mode(problem: &Problem, means: &[Point], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; problem.n_modes()];
    for (m, w) in means.iter().zip(weights) {
        out[nearest_mode(problem, m)] += w;
    }
    out
}

fn global_limit_weights(problem: &Problem) -> Vec<f64> {
    let hs: Vec<DMatrix<f64>> = problem.global_modes().map(|m| m.hessian.clone().expect("mode hessian")).collect();
    limit_weights(&hs).expect("limit weights").values
}

#[test]
fn criterion_01_symmetric_weights() {
    const TOL: f64 = 0.05;
    const LOCAL_MAX: f64 = 0.05;
    const WANTED: usize = 10;
    const MAX_SEEDS: usize = 30;
    let cfg = preset("fig-weight-sym").unwrap();
    let problem = resolve_problem(&cfg.problem).unwrap();
    let base = cfg.run_config(&problem, cfg.k).unwrap();
    let obj = problem.objective.clone();
    let mut kept = 0;
    let mut ok = 0;
    let mut worst = 0.0f64;
    let mut local_max = 0.0f64;
    for r in 0..MAX_SEEDS {
        if kept == WANTED {
            break;
        }
        let rc = RunConfig { replicate: r as u64, snapshot_every: cfg.t, ..base.clone() };
        let trace = run(&obj, &rc).expect("run");
        let mut assigned: Vec<usize> = trace.final_means.iter().map(|m| nearest_mode(&problem, m)).collect();
        assigned.sort_unstable();
        assigned.dedup();
        if assigned.len() != problem.n_modes() {
            continue;
        }
        kept += 1;
        let per_mode = weight_per_mode(&problem, &trace.final_means, &trace.final_weights);
        let mut good = true;
        for (m, w) in problem.modes.iter().zip(&per_mode) {
            if m.is_global {
                worst = worst.max((w - 1.0 / 3.0).abs());
                good &= (w - 1.0 / 3.0).abs() <= TOL;
            } else {
                local_max = local_max.max(*w);
                good &= *w < LOCAL_MAX;
            }
        }
        ok += usize::from(good);
    }
    let pass = kept == WANTED && ok == WANTED;
    emit(
        1,
        pass,
        &format!(
            "sym weights: {ok}/{kept} distinct-assignment runs within 1/3 +- {TOL} (worst dev {worst:.4}), local < {LOCAL_MAX} (max {local_max:.4})"
        ),
    );
}

#[test]
fn criterion_02_asymmetric_weights() {
    const TOL: f64 = 0.05;
    const LOCAL_MAX: f64 = 0.05;
    let (problem, out) = bench_preset("fig-weight-asym", None, 10);
    let target = global_limit_weights(&problem);
    let mut ok = 0;
    let mut worst = 0.0f64;
    let mut local_max = 0.0f64;
    let mut sample = String::new();
    for r in &out.runs {
        let t = r.trace.as_ref().unwrap();
        let per_mode = weight_per_mode(&problem, &t.final_means, &t.final_weights);
        let mut gi = 0;
        let mut good = true;
        let mut globals = Vec::new();
        for (m, w) in problem.modes.iter().zip(&per_mode) {
            if m.is_global {
                worst = worst.max((w - target[gi]).abs());
                good &= (w - target[gi]).abs() <= TOL;
                globals.push(format!("{w:.3}"));
                gi += 1;
            } else {
                local_max = local_max.max(*w);
                good &= *w < LOCAL_MAX;
            }
        }
        if sample.is_empty() {
            sample = globals.join("/");
        }
        ok += usize::from(good);
    }
    emit(
        2,
        ok == out.runs.len(),
        &format!(
            "asym weights: {ok}/{} runs within +-{TOL} of {:.3}/{:.3} (e.g. {sample}, worst dev {worst:.4}), local < {LOCAL_MAX} (max {local_max:.4})",
            out.runs.len(),
            target[0],
            target[1]
        ),
    );
}

#[test]
fn criterion_03_symmetric_mode_finding() {
    let (_, k3) = bench_preset("fig-mode-sym", Some(3), 100);
    let (_, k4) = bench_preset("fig-mode-sym", Some(4), 100);
    let pass = k3.report.gpr >= 0.95 && k4.report.apr >= 0.9;
    emit(
        3,
        pass,
        &format!(
            "fs-nva-gm sym H=100: K=3 {} (need gpr >= 0.95); K=4 {} (need apr >= 0.9)",
            metrics(&k3.report),
            metrics(&k4.report)
        ),
    );
}

#[test]
fn criterion_04_styblinski_tang() {
    let (_, nva) = bench_preset("fig-mode-st", Some(16), 100);
    let (_, fs) = bench_preset("fig-mode-st-fs", Some(16), 100);
    let a = nva.report.gpr >= 0.95 && (0.82..=1.0).contains(&nva.report.apr);
    let b = (0.74..=1.0).contains(&fs.report.apr);
    emit(
        4,
        a && b,
        &format!(
            "st d=4 K=16 H=100: nva-gm {} (need gpr >= 0.95, apr in [0.82, 1]); fs-nva-gm {} (need apr in [0.74, 1])",
            metrics(&nva.report),
            metrics(&fs.report)
        ),
    );
}

#[test]
fn criterion_05_cec_suite() {
    let needs: [(&str, f64, f64); 6] = [
        ("cec-f1", 0.98, 1.0),
        ("cec-f2", 0.95, 1.0),
        ("cec-f3", 0.98, 1.0),
        ("cec-f4", 0.95, 1.0),
        ("cec-f5", 0.98, 1.0),
        ("cec-f6", 0.65, 0.85),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, lo, hi) in needs {
        let cfg = preset(name).unwrap();
        let problem = resolve_problem(&cfg.problem).unwrap();
        let rc = cfg.run_config(&problem, cfg.k).unwrap();
        let out = run_benchmark(&problem, &rc, 50, &cfg.detection_rule(&problem), 0).unwrap();
        let r = &out.report;
        let good = (lo..=hi).contains(&r.gpr);
        pass &= good;
        let aborted = if r.failures.is_empty() { String::new() } else { format!(" aborted={}", r.failures.len()) };
        parts.push(format!(
            "{name} gpr={:.3} gsr={:.3} need [{lo}, {hi}] {}{aborted}",
            r.gpr,
            r.gsr,
            if good { "ok" } else { "miss" }
        ));
    }
    emit(5, pass, &format!("cec H=50: {}", parts.join("; ")));
}

#[test]
fn criterion_06_degenerate_weights() {
    const MIN_WEIGHT: f64 = 0.95;
    const MIN_RUNS: usize = 8;
    let (problem, out) = bench_preset("fig-weight-degen", None, 10);
    let degen = problem
        .modes
        .iter()
        .position(|m| m.location[0] < 0.0)
        .expect("degenerate mode at x1 = -3");
    let ws: Vec<f64> = out
        .runs
        .iter()
        .map(|r| {
            let t = r.trace.as_ref().unwrap();
            weight_per_mode(&problem, &t.final_means, &t.final_weights)[degen]
        })
        .collect();
    let hits = ws.iter().filter(|w| **w > MIN_WEIGHT).count();
    let median = {
        let mut s = ws.clone();
        s.sort_by(f64::total_cmp);
        (s[4] + s[5]) / 2.0
    };
    emit(
        6,
        hits >= MIN_RUNS,
        &format!("degenerate-mode weight > {MIN_WEIGHT} in {hits}/10 runs (need >= {MIN_RUNS}); median weight {median:.3}"),
    );
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize, lo: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &m * m.transpose() / d as f64 + DMatrix::identity(d, d) * lo
}

#[test]
fn criterion_07_single_gaussian_rate() {
    const TOL: f64 = 0.05;
    let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
    let q = make_quadratic(Point::from_row_slice(&[0.5, -1.0]), a.clone()).unwrap();
    let obj: Arc<dyn Objective> = Arc::new(q);
    let schedule = Schedule { omega1: 1.0, alpha: 1.0, rho1: 0.1, beta: 0.8, kappa: 0, tau: 0.0, rho_max: None };
    let t = 2000;
    let mut rc = RunConfig::new(Algorithm::NvaGm, 1, 4, t, schedule, 2);
    rc.mu_variant = Some(MuVariant::Gradient);
    rc.s_variant = Some(SVariant::Hessian);
    rc.snapshot_every = t;
    let trace = run(&obj, &rc).unwrap();
    let s = trace.final_state.unwrap().component(0).precision().clone();
    let rel = ((s * schedule.omega(t)) - &a).norm() / a.norm();
    emit(7, rel < TOL, &format!("K=1 quadratic T={t}: |w_T S_T - A|_F / |A|_F = {rel:.4} (need < {TOL})"));
}

/// Mean and standard error of each coordinate over rows.
fn mean_se(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let p = rows[0].len();
    let mut mean = vec![0.0; p];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; p];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m).powi(2) / (n - 1.0);
        }
    }
    (mean, var.iter().map(|v| (v / n).sqrt()).collect())
}

/// Largest `|mean - truth| / SE` over coordinates; zero-variance coordinates
/// must agree to 1e-9.
fn z_worst(rows: &[Vec<f64>], truth: &[f64]) -> f64 {
    let (mean, se) = mean_se(rows);
    mean.iter()
        .zip(&se)
        .zip(truth)
        .map(|((m, s), t)| {
            if *s < 1e-12 {
                if (m - t).abs() < 1e-9 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (m - t).abs() / s
            }
        })
        .fold(0.0, f64::max)
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

fn two_component_state() -> MixtureState {
    MixtureState::new(
        vec![0.35, 0.65],
        vec![
            GaussianComponent::new(Point::from_row_slice(&[0.7, -0.4]), DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]))
                .unwrap(),
            GaussianComponent::new(Point::from_row_slice(&[-0.9, 0.6]), DMatrix::identity(2, 2) * 2.0).unwrap(),
        ],
    )
    .unwrap()
}

#[derive(Debug)]
struct Affine(Quadratic);

impl Objective for Affine {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn tier(&self) -> Tier {
        Tier::Value
    }
    fn value(&self, x: &Point) -> f64 {
        2.0 * self.0.value(x) + 7.0
    }
}

#[test]
fn criterion_08_estimators() {
    const N: usize = 100_000;
    const Z: f64 = 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let m = Point::from_row_slice(&[0.3, 0.2]);
    let quad = make_quadratic(m.clone(), a.clone()).unwrap();
    let state = two_component_state();

    // (a) variant 2 at omega = 0 returns -A for every sample.
    let ap0 = AnnealedPotential::new(&quad, 0.0, &state);
    let xs = state.sample_component(0, 1000, &mut rng);
    let evals: Vec<_> = xs.iter().map(|x| ap0.evaluate(x, 2).unwrap()).collect();
    let max_dev = xs
        .iter()
        .zip(&evals)
        .map(|(x, e)| {
            let g = grad_prec_from_evals(state.component(0), std::slice::from_ref(x), std::slice::from_ref(e), SVariant::Hessian);
            (g + &a).amax()
        })
        .fold(0.0, f64::max);
    let pass_a = max_dev <= 1e-12;

    // (b) per-sample estimates, N draws per component and temperature.
    let mut z_all = 0.0f64;
    for omega in [0.0, 0.5] {
        let ap = AnnealedPotential::new(&quad, omega, &state);
        let xs0 = state.sample_component(0, N, &mut rng);
        let xs1 = state.sample_component(1, N, &mut rng);
        let e0: Vec<_> = xs0.iter().map(|x| ap.evaluate(x, 2).unwrap()).collect();
        let e1: Vec<_> = xs1.iter().map(|x| ap.evaluate(x, 2).unwrap()).collect();
        let comp = state.component(0);
        let mut mu = [Vec::new(), Vec::new()];
        let mut prec = [Vec::new(), Vec::new(), Vec::new()];
        let mut diffs = Vec::new();
        let mut pi = Vec::new();
        for i in 0..N {
            let x = std::slice::from_ref(&xs0[i]);
            let e = std::slice::from_ref(&e0[i]);
            let m0 = grad_mu_from_evals(comp, x, e, MuVariant::Score);
            let m1 = grad_mu_from_evals(comp, x, e, MuVariant::Gradient);
            let s0 = grad_prec_from_evals(comp, x, e, SVariant::Score);
            let s1 = grad_prec_from_evals(comp, x, e, SVariant::Gradient);
            let s2 = grad_prec_from_evals(comp, x, e, SVariant::Hessian);
            let mut d: Vec<f64> = (&m0 - &m1).iter().copied().collect();
            d.extend(flat(&(&s0 - &s2)));
            d.extend(flat(&(&s1 - &s2)));
            diffs.push(d);
            mu[0].push(m0.iter().copied().collect());
            mu[1].push(m1.iter().copied().collect());
            prec[0].push(flat(&s0));
            prec[1].push(flat(&s1));
            prec[2].push(flat(&s2));
            pi.push(vec![grad_pi_from_values(&[e0[i].value], &[e1[i].value])]);
        }
        z_all = z_all.max(z_worst(&diffs, &vec![0.0; diffs[0].len()]));
        if omega == 0.0 {
            let mu_true: Vec<f64> = (-&a * (comp.mean() - &m)).iter().copied().collect();
            let prec_true = flat(&-&a);
            let pi_true = quad.expectation(comp.mean(), &comp.covariance())
                - quad.expectation(state.component(1).mean(), &state.component(1).covariance());
            for rows in &mu {
                z_all = z_all.max(z_worst(rows, &mu_true));
            }
            for rows in &prec {
                z_all = z_all.max(z_worst(rows, &prec_true));
            }
            z_all = z_all.max(z_worst(&pi, &[pi_true]));
        }
    }
    let pass_b = z_all < Z;

    // (c) rank invariance under l -> 2 l + 7.
    let shifted = Affine(quad.clone());
    let u = utility_cmaes(16, 4).unwrap();
    let mut identical = true;
    for k in 0..2 {
        let xs = state.sample_component(k, 16, &mut rng);
        let p1 = fs_estimate(&AnnealedPotential::new(&quad, 0.0, &state), k, &xs, &u).unwrap();
        let p2 = fs_estimate(&AnnealedPotential::new(&shifted, 0.0, &state), k, &xs, &u).unwrap();
        identical &= p1 == p2;
    }

    // (d) variance of batch means against B.
    let ap = AnnealedPotential::new(&quad, 0.5, &state);
    let comp = state.component(0);
    let bs = [4usize, 16, 64, 256];
    let reps = 400;
    let mut slopes = Vec::new();
    for est in 0..6 {
        let mut pts = Vec::new();
        for &b in &bs {
            let mut rows = Vec::with_capacity(reps);
            for _ in 0..reps {
                let xs = state.sample_component(0, b, &mut rng);
                let es: Vec<_> = xs.iter().map(|x| ap.evaluate(x, 2).unwrap()).collect();
                let row = match est {
                    0 => grad_mu_from_evals(comp, &xs, &es, MuVariant::Score).iter().copied().collect(),
                    1 => grad_mu_from_evals(comp, &xs, &es, MuVariant::Gradient).iter().copied().collect(),
                    2 => flat(&grad_prec_from_evals(comp, &xs, &es, SVariant::Score)),
                    3 => flat(&grad_prec_from_evals(comp, &xs, &es, SVariant::Gradient)),
                    4 => flat(&grad_prec_from_evals(comp, &xs, &es, SVariant::Hessian)),
                    _ => {
                        let ys = state.sample_component(1, b, &mut rng);
                        let v0: Vec<f64> = es.iter().map(|e| e.value).collect();
                        let v1: Vec<f64> = ys.iter().map(|y| ap.value(y)).collect();
                        vec![grad_pi_from_values(&v0, &v1)]
                    }
                };
                rows.push(row);
            }
            let (_, se) = mean_se(&rows);
            let total_var: f64 = se.iter().map(|s| s * s * reps as f64).sum();
            pts.push(((b as f64).ln(), total_var.ln()));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        slopes.push(slope);
    }
    let pass_d = slopes.iter().all(|s| (-1.2..=-0.8).contains(s));
    let slopes_s: Vec<String> = slopes.iter().map(|s| format!("{s:.3}")).collect();
    emit(
        8,
        pass_a && pass_b && identical && pass_d,
        &format!(
            "(a) variant-2 max |g + A| = {max_dev:.1e} (need <= 1e-12); (b) worst |z| = {z_all:.2} at N={N} (need < {Z}); (c) fs bit-identical under 2l+7: {identical}; (d) variance exponents [{}] (need in [-1.2, -0.8])",
            slopes_s.join(", ")
        ),
    );
}

fn random_mixture(rng: &mut ChaCha8Rng) -> MixtureState {
    let k = rng.gen_range(1..=4);
    let d = rng.gen_range(1..=4);
    let comps = (0..k)
        .map(|_| {
            let mean = Point::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
            GaussianComponent::new(mean, random_spd(rng, d, 0.3)).unwrap()
        })
        .collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    MixtureState::new(raw.iter().map(|w| w / total).collect(), comps).unwrap()
}

#[test]
fn criterion_09_mixture_identities() {
    const GRAD_TOL: f64 = 1e-5;
    const HESS_TOL: f64 = 1e-4;
    const ENTROPY_TOL: f64 = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g_worst = 0.0f64;
    let mut h_worst = 0.0f64;
    for _ in 0..100 {
        let st = random_mixture(&mut rng);
        let k = rng.gen_range(0..st.n_components());
        let x = st.sample_component(k, 1, &mut rng).remove(0);
        let g = mixture_logpdf_grad(&st, &x);
        let g_fd = finite_diff_grad(&|p: &Point| mixture_logpdf(&st, p), &x, FD_GRAD_STEP);
        g_worst = g_worst.max((&g - &g_fd).norm() / g_fd.norm().max(1.0));
        let h = mixture_logpdf_hess(&st, &x);
        let h_fd = finite_diff_jacobian(&|p: &Point| mixture_logpdf_grad(&st, p), &x, FD_HESS_STEP);
        h_worst = h_worst.max((&h - &h_fd).norm() / h_fd.norm().max(1.0));
    }

    // Entropy of well separated components by stratified sampling, written as
    // sum_k pi_k [H_k - log pi_k] - sum_k pi_k E_k[log q - log pi_k N_k].
    let st = MixtureState::new(
        vec![0.2, 0.3, 0.5],
        vec![
            GaussianComponent::new(Point::from_row_slice(&[-10.0, 0.0]), DMatrix::identity(2, 2)).unwrap(),
            GaussianComponent::new(Point::from_row_slice(&[10.0, 0.0]), DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]))
                .unwrap(),
            GaussianComponent::new(Point::from_row_slice(&[0.0, 12.0]), DMatrix::identity(2, 2) * 0.5).unwrap(),
        ],
    )
    .unwrap();
    let n = 100_000;
    let mut mc = 0.0;
    for (k, (c, w)) in st.components().iter().zip(st.weights()).enumerate() {
        let xs = st.sample_component(k, n, &mut rng);
        let corr: f64 = xs.iter().map(|x| st.log_pdf(x) - w.ln() - c.log_pdf(x)).sum::<f64>() / n as f64;
        mc += w * (c.entropy() - w.ln() - corr);
    }
    let approx = approx_mixture_entropy(&st);
    let ent_err = (approx - mc).abs();

    // The quoted vector is the formula value to about 3e-4; the exact value is
    // 4 ln 3 / ln 4.5 = 2.92168...
    let u = utility_cmaes(4, 2).unwrap().values;
    let u_expect = [2.9214, 1.0786, 0.0, 0.0];
    let u_err = u.iter().zip(&u_expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let u_sum_err = (u.iter().sum::<f64>() - 4.0).abs();

    let sym = global_limit_weights(&resolve_problem("sym-gmm").unwrap());
    let asym = global_limit_weights(&resolve_problem("asym-gmm").unwrap());
    let sym_err = sym.iter().map(|w| (w - 1.0 / 3.0).abs()).fold(0.0, f64::max);
    let mut asym_sorted = asym.clone();
    asym_sorted.sort_by(|a, b| b.total_cmp(a));
    let asym_err = (asym_sorted[0] - 0.586).abs().max((asym_sorted[1] - 0.414).abs());

    let pass = g_worst < GRAD_TOL
        && h_worst < HESS_TOL
        && ent_err < ENTROPY_TOL
        && u_err < 5e-4
        && u_sum_err < 1e-12
        && sym_err < 1e-3
        && asym_err < 1e-3;
    emit(
        9,
        pass,
        &format!(
            "grad rel err {g_worst:.1e} (< {GRAD_TOL}), hess rel err {h_worst:.1e} (< {HESS_TOL}), entropy |approx - mc| {ent_err:.1e} (< {ENTROPY_TOL}), cmaes(4,2) = ({:.4}, {:.4}, 0, 0) max err {u_err:.1e} (< 5e-4) sum err {u_sum_err:.0e}, limit weights sym err {sym_err:.1e} asym {:.4}/{:.4} err {asym_err:.1e} (< 1e-3)",
            u[0],
            u[1],
            asym_sorted[0],
            asym_sorted[1]
        ),
    );
}

#[test]
fn criterion_10_budget_accounting() {
    const K: usize = 3;
    const B: usize = 4;
    const T: usize = 10;
    const BKT: u64 = (B * K * T) as u64;
    let q = make_quadratic(Point::from_row_slice(&[0.0, 0.0]), DMatrix::identity(2, 2)).unwrap();
    let obj: Arc<dyn Objective> = Arc::new(q);
    let schedule = Schedule { omega1: 1.0, alpha: 1.0, rho1: 0.1, beta: 0.8, kappa: 0, tau: 0.0, rho_max: None };
    let base = RunConfig::new(Algorithm::NvaGm, K, B, T, schedule, 2);
    // (label, config, expected value/gradient/hessian counts)
    let mut cases: Vec<(String, RunConfig, [u64; 3])> = Vec::new();
    for (mu, s) in [(0u8, 0u8), (0, 1), (1, 1), (0, 2), (1, 2)] {
        let rc = RunConfig {
            mu_variant: Some(MuVariant::try_from(mu).unwrap()),
            s_variant: Some(SVariant::try_from(s).unwrap()),
            ..base.clone()
        };
        let grad = if mu == 1 || s == 1 { BKT } else { 0 };
        let hess = if s == 2 { BKT } else { 0 };
        cases.push((format!("nva-gm({mu},{s})"), rc, [BKT, grad, hess]));
    }
    cases.push((
        "fs-nva-gm".into(),
        RunConfig {
            algorithm: Algorithm::FsNvaGm,
            utilities: Some(nva::estimation::UtilitySpec::Cmaes { b0: 2 }),
            ..base.clone()
        },
        [BKT, 0, 0],
    ));
    cases.push(("psga".into(), RunConfig { algorithm: Algorithm::Psga, ..base.clone() }, [0, BKT, 0]));
    cases.push(("pcmaes".into(), RunConfig { algorithm: Algorithm::Pcmaes, ..base.clone() }, [BKT, 0, 0]));
    let mut bad = Vec::new();
    for (label, rc, want) in &cases {
        let c = run(&obj, rc).unwrap().counts;
        let got = [c.value, c.gradient, c.hessian];
        if got != *want {
            bad.push(format!("{label} got {got:?} want {want:?}"));
        }
    }
    emit(
        10,
        bad.is_empty(),
        &format!(
            "T={T} K={K} B={B}: {} of {} configurations match exactly{}",
            cases.len() - bad.len(),
            cases.len(),
            if bad.is_empty() { String::new() } else { format!(" ({})", bad.join("; ")) }
        ),
    );
}

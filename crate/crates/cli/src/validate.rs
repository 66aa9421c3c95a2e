//! Analytic-toy validation suite behind `rrd validate`.
//!
//! Each check compares an estimator against a closed form or a brute-force
//! oracle and reports the measured value next to the expected one.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use rrd_core::dynamics::spearman;
use rrd_core::glue::{
    cone_projection, critical_dimension, estimate_geometry, primal_active_set, sample_dichotomies, separability_curve,
    ConeProblem, DichotomyEnsemble, DichotomyScheme, GlueConfig, SolveMode, SEPARABILITY_SLACK, SOLVER_TOL,
};
use rrd_core::kernels::{alignment_value, initial_decay_rate};
use rrd_core::tasks::{
    analytic_projection_accuracy, gaussian_manifold_suite, gaussian_pair, two_ellipsoid_labeled,
    GaussianManifoldParams, SweepParameter,
};
use rrd_core::{group_by_label, EmbeddingMatrix, LabelVector, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    /// Reduced sample counts with tolerances widened to match.
    Quick,
}

impl Mode {
    fn pick<T>(self, full: T, quick: T) -> T {
        match self {
            Mode::Full => full,
            Mode::Quick => quick,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub measured: String,
    pub expected: String,
    pub seconds: f64,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<24} measured {} | expected {} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.expected,
            self.seconds
        )
    }
}

fn timed(id: u32, name: &str, f: impl FnOnce() -> Result<(bool, String, String)>) -> Check {
    let start = Instant::now();
    let (pass, measured, expected) = f().unwrap_or_else(|e| (false, format!("error: {e}"), String::new()));
    Check { id, name: name.to_string(), pass, measured, expected, seconds: start.elapsed().as_secs_f64() }
}

/// Primal active-set vs dual NNLS objective on random small cone problems.
/// `dual_tol` is exposed so a loosened solver can be shown to fail.
pub fn duality(mode: Mode, dual_tol: f64) -> Check {
    timed(1, "strong duality", || {
        let count = mode.pick(100, 30);
        let tol = mode.pick(1e-7, 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst = 0.0f64;
        for _ in 0..count {
            let n = rng.random_range(1..=10);
            let k = rng.random_range(1..=12);
            let a = DMatrix::from_fn(k, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let t = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let prob = ConeProblem::new(a, t)?;
            let primal = primal_active_set(&prob, SOLVER_TOL)?;
            let dual = cone_projection(&prob, dual_tol)?;
            worst = worst.max((prob.primal_objective(&primal.v_star) - dual.sq_dist).abs());
        }
        Ok((worst <= tol, format!("max |primal - dual| = {worst:.2e} over {count}"), format!("<= {tol:.0e}")))
    })
}

/// Antipodal singletons: one effective half-space, `E[t₁² 1{t₁<0}] = 1/2`.
pub fn half_gaussian(mode: Mode) -> Check {
    timed(2, "half-Gaussian n_crit", || {
        let samples = mode.pick(10_000, 2_000);
        let n = 6;
        let mut x = Array2::zeros((2, n));
        x[[0, 0]] = 1.0;
        x[[1, 0]] = -1.0;
        let ms = group_by_label(EmbeddingMatrix::new(x)?, &LabelVector::new(vec![0, 1], 2)?)?;
        let ens = DichotomyEnsemble::pair(2, 0, 1)?;
        let g = critical_dimension(&ms, &ens, samples, 2, SolveMode::Dual)?;
        let se = g.stderr.n_crit.unwrap_or(0.0);
        let pass = (g.n_crit - 0.5).abs() <= 3.0 * se;
        Ok((pass, format!("{:.4} ± {se:.4} ({samples} samples)", g.n_crit), "0.5 within 3 s.e.".into()))
    })
}

/// Dual formula vs the empirical projection oracle `Σ_d (1 − p(d))`.
pub fn formula_vs_oracle(mode: Mode) -> Check {
    timed(3, "formula vs oracle", || {
        let instances = mode.pick(10, 3);
        let samples = mode.pick(2000, 500);
        let trials = mode.pick(300, 100);
        let (n, c, m) = (16, 3, 5);
        let mut worst = 0.0f64;
        let mut ok = true;
        for inst in 0..instances {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + inst);
            let x = Array2::from_shape_fn((c * m, n), |_| rng.sample::<f64, _>(StandardNormal));
            let y: Vec<u32> = (0..c * m).map(|i| (i / m) as u32).collect();
            let ms = group_by_label(EmbeddingMatrix::new(x)?, &LabelVector::new(y, c)?)?;
            let ens = sample_dichotomies(c, &DichotomyScheme::AllPairwise, 0)?;
            let formula = critical_dimension(&ms, &ens, samples, inst, SolveMode::Dual)?.n_crit;
            let dims: Vec<usize> = (1..=n).collect();
            let oracle = separability_curve(&ms, &ens, &dims, trials, inst, SEPARABILITY_SLACK)?.n_crit;
            let diff = (formula - oracle).abs();
            worst = worst.max(diff);
            ok &= diff <= (0.1 * oracle).max(1.0);
        }
        Ok((ok, format!("max |formula - oracle| = {worst:.3} over {instances}"), "<= max(10%, 1.0)".into()))
    })
}

/// Two-ellipsoid class pair with points kept inside Mahalanobis radius
/// `cutoff`, so the homogeneous cone problem stays feasible.
fn truncated_ellipsoid(sigma_perp: f64, m: usize, cutoff: f64, seed: u64) -> Result<(EmbeddingMatrix, LabelVector)> {
    let (mu, s1) = (1.0, 0.5);
    let (x, y) = two_ellipsoid_labeled(mu, s1, sigma_perp, m, seed)?;
    let keep: Vec<usize> = (0..x.n_samples())
        .filter(|&i| {
            let sign = if y.get(i) == 0 { 1.0 } else { -1.0 };
            let z1 = (x.row(i)[0] - sign * mu) / s1;
            let z2 = x.row(i)[1] / sigma_perp;
            z1 * z1 + z2 * z2 <= cutoff * cutoff
        })
        .collect();
    Ok((EmbeddingMatrix::new(x.select_rows(&keep))?, y.select(&keep)))
}

/// Test accuracy of the Fisher discriminant fit on a separate training draw.
fn lda_accuracy(train: (&EmbeddingMatrix, &LabelVector), test: (&EmbeddingMatrix, &LabelVector)) -> f64 {
    let (x, y) = train;
    let class_rows = |c: usize| -> Vec<usize> { (0..y.len()).filter(|&i| y.get(i) == c).collect() };
    let (r0, r1) = (class_rows(0), class_rows(1));
    let m0 = x.view().select(Axis(0), &r0).mean_axis(Axis(0)).unwrap();
    let m1 = x.view().select(Axis(0), &r1).mean_axis(Axis(0)).unwrap();
    let d = x.dim();
    let mut s = DMatrix::<f64>::zeros(d, d);
    for (rows, mean) in [(&r0, &m0), (&r1, &m1)] {
        for &i in rows {
            let v = DVector::from_iterator(d, (&x.row(i) - mean).iter().copied());
            s += &v * v.transpose();
        }
    }
    let diff = DVector::from_iterator(d, (&m0 - &m1).iter().copied());
    let w = s.lu().solve(&diff).unwrap_or(diff);
    let w = Array1::from_iter(w.iter().copied());
    let b = -w.dot(&((&m0 + &m1) / 2.0));
    let (xt, yt) = test;
    let hits = (0..yt.len()).filter(|&i| (xt.row(i).dot(&w) + b > 0.0) == (yt.get(i) == 0)).count();
    hits as f64 / yt.len() as f64
}

pub const ELLIPSOID_SIGMAS: [f64; 5] = [0.1, 0.3, 1.0, 3.0, 10.0];

pub fn two_ellipsoid_sweep(mode: Mode) -> Check {
    timed(4, "two-ellipsoid sweep", || {
        let samples = mode.pick(4000, 1000);
        let m = mode.pick(200, 60);
        let acc_m = mode.pick(20_000, 5_000);
        let mut n_crit = Vec::new();
        let mut acc = Vec::new();
        for &sp in &ELLIPSOID_SIGMAS {
            let (x, y) = truncated_ellipsoid(sp, m, 1.5, 4)?;
            let ms = group_by_label(x, &y)?;
            let ens = DichotomyEnsemble::pair(2, 0, 1)?;
            n_crit.push(critical_dimension(&ms, &ens, samples, 4, SolveMode::Dual)?.n_crit);
            let train = two_ellipsoid_labeled(1.0, 0.5, sp, acc_m, 5)?;
            let test = two_ellipsoid_labeled(1.0, 0.5, sp, acc_m, 6)?;
            acc.push(lda_accuracy((&train.0, &train.1), (&test.0, &test.1)));
        }
        let increasing = n_crit.windows(2).all(|w| w[1] > w[0]);
        let spread =
            acc.iter().copied().fold(f64::NEG_INFINITY, f64::max) - acc.iter().copied().fold(f64::INFINITY, f64::min);
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",");
        Ok((
            increasing && spread < 0.02,
            format!("n_crit [{}], LDA acc [{}] spread {spread:.4}", fmt(&n_crit), fmt(&acc)),
            "n_crit strictly increasing, spread < 0.02".into(),
        ))
    })
}

pub const PROJECTION_ANGLES: [f64; 4] = [0.0, PI / 6.0, PI / 3.0, PI / 2.0];

pub fn projection_accuracy(mode: Mode) -> Check {
    timed(5, "Acc(theta)", || {
        let m = mode.pick(10_000, 2_500);
        let tol = mode.pick(0.02, 0.04);
        let (mu, s1, sp) = (1.0, 0.5, 3.0);
        let mut worst = 0.0f64;
        for (k, &theta) in PROJECTION_ANGLES.iter().enumerate() {
            let (x, y) = two_ellipsoid_labeled(mu, s1, sp, m, 50 + k as u64)?;
            let (s, c) = theta.sin_cos();
            // Bayes rule for equal-variance classes at ±μ cosθ: sign of the projection
            let hits = (0..y.len())
                .filter(|&i| {
                    let z = x.row(i)[0] * c + x.row(i)[1] * s;
                    if c.abs() < 1e-12 {
                        y.get(i) == 0
                    } else {
                        (z * c.signum() > 0.0) == (y.get(i) == 0)
                    }
                })
                .count();
            let empirical = hits as f64 / y.len() as f64;
            worst = worst.max((empirical - analytic_projection_accuracy(theta, mu, s1, sp)).abs());
        }
        Ok((
            worst <= tol,
            format!("max |empirical - formula| = {worst:.4} at {} samples/angle", 2 * m),
            format!("<= {tol}"),
        ))
    })
}

/// Sweep values for each ground-truth parameter of the Gaussian manifold generator.
pub fn sweep_values(p: SweepParameter) -> Vec<f64> {
    match p {
        SweepParameter::Dimension => vec![2.0, 4.0, 8.0, 16.0, 32.0],
        SweepParameter::Radius => vec![0.25, 0.5, 1.0, 2.0, 4.0],
        SweepParameter::CenterAlignment => vec![0.0, 0.2, 0.4, 0.6, 0.8],
        SweepParameter::AxisAlignment => vec![0.0, 0.2, 0.4, 0.6, 0.8],
    }
}

fn inversions(x: &[f64]) -> usize {
    let up = x.windows(2).filter(|w| w[1] < w[0]).count();
    let down = x.windows(2).filter(|w| w[1] > w[0]).count();
    up.min(down)
}

pub fn glue_sweep(mode: Mode) -> Check {
    timed(6, "GLUE geometry sweep", || {
        let (n, p, m) = (200, 2, 60);
        let seeds: Vec<u64> = (0..mode.pick(3, 1)).collect();
        let cfg =
            GlueConfig { n_samples: mode.pick(200, 60), repeats: 1, points_per_class: None, ..GlueConfig::default() };
        let ens = sample_dichotomies(p, &DichotomyScheme::AllPairwise, 0)?;
        let mut ok = true;
        let mut parts = Vec::new();
        for sweep in [
            SweepParameter::Dimension,
            SweepParameter::Radius,
            SweepParameter::CenterAlignment,
            SweepParameter::AxisAlignment,
        ] {
            let values = sweep_values(sweep);
            let mut est = vec![0.0; values.len()];
            let mut ncrit = vec![0.0; values.len()];
            for &seed in &seeds {
                let suite = gaussian_manifold_suite(n, p, m, sweep, &values, GaussianManifoldParams::default(), seed)?;
                for (k, member) in suite.iter().enumerate() {
                    let g = estimate_geometry(&member.manifolds, &ens, &cfg, seed)?;
                    let v = match sweep {
                        SweepParameter::Dimension => g.d,
                        SweepParameter::Radius => g.r,
                        SweepParameter::CenterAlignment => g.rho_c,
                        SweepParameter::AxisAlignment => g.rho_a,
                    };
                    est[k] += v.unwrap_or(f64::NAN) / seeds.len() as f64;
                    ncrit[k] += g.n_crit / seeds.len() as f64;
                }
            }
            let rho = spearman(&values, &est).unwrap_or(f64::NAN);
            let inv = inversions(&ncrit);
            ok &= rho >= 0.9 && inv <= 1;
            parts.push(format!("{sweep:?}: spearman {rho:.2}, n_crit inversions {inv}"));
        }
        Ok((ok, parts.join("; "), "spearman >= 0.9, <= 1 inversion".into()))
    })
}

/// CKA straight from the definition with an explicit centering matrix.
pub fn dense_cka_oracle(x: &EmbeddingMatrix, y: &LabelVector) -> f64 {
    let n = x.n_samples();
    let h = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
    let k = x.view().dot(&x.view().t());
    let l = Array2::from_shape_fn((n, n), |(i, j)| if y.get(i) == y.get(j) { 1.0 } else { 0.0 });
    let tr = |a: &Array2<f64>, b: &Array2<f64>| a.dot(&h).dot(b).dot(&h).diag().sum();
    tr(&k, &l) / (tr(&k, &k) * tr(&l, &l)).sqrt()
}

pub fn ntk_toys(mode: Mode) -> Check {
    timed(7, "NTK toy alignment", || {
        let m = mode.pick(300, 100);
        let (x1, y1) = gaussian_pair(&[1.0, 0.0], &[0.5, 3.0], m, 7)?;
        let (x2, y2) = gaussian_pair(&[0.1, 0.0], &[0.01, 10.0], m, 7)?;
        let a1 = alignment_value(&x1, &y1)?;
        let a2 = alignment_value(&x2, &y2)?;
        let rel = ((a1 - dense_cka_oracle(&x1, &y1)).abs() / a1).max((a2 - dense_cka_oracle(&x2, &y2)).abs() / a2);
        Ok((
            a1 > 3.0 * a2 && rel <= 1e-10,
            format!("A1 = {a1:.4}, A2 = {a2:.4}, oracle rel err {rel:.1e}"),
            "A1 > 3 A2, rel err <= 1e-10".into(),
        ))
    })
}

/// Balanced labels, mean-zero features with class-dependent shifts.
fn balanced_centered(
    seed: u64,
    per_class: usize,
    classes: usize,
    dim: usize,
) -> Result<(EmbeddingMatrix, LabelVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = per_class * classes;
    let shift = Array2::from_shape_fn((classes, dim), |_| rng.sample::<f64, _>(StandardNormal));
    let y: Vec<u32> = (0..n).map(|i| (i % classes) as u32).collect();
    let mut x =
        Array2::from_shape_fn((n, dim), |(i, j)| rng.sample::<f64, _>(StandardNormal) + shift[[y[i] as usize, j]]);
    let mean = x.mean_axis(Axis(0)).unwrap();
    x -= &mean;
    Ok((EmbeddingMatrix::new(x)?, LabelVector::new(y, classes)?))
}

/// `−Δℓ/h` after one gradient step of size `h` from `W = 0` on `‖WΦ − Y‖²/(2n)`.
fn finite_difference_rate(f: &EmbeddingMatrix, l: &LabelVector, h: f64) -> f64 {
    let phi = f.view().t().to_owned();
    let n = f.n_samples() as f64;
    let mut y = Array2::zeros((l.classes(), f.n_samples()));
    for i in 0..l.len() {
        y[[l.get(i), i]] = 1.0;
    }
    let loss = |w: &Array2<f64>| (w.dot(&phi) - &y).iter().map(|v| v * v).sum::<f64>() / (2.0 * n);
    let w0 = Array2::<f64>::zeros((l.classes(), phi.nrows()));
    let grad = (w0.dot(&phi) - &y).dot(&phi.t()) / n;
    let w1 = &w0 - &(grad * h);
    -(loss(&w1) - loss(&w0)) / h
}

pub fn gradient_flow(mode: Mode) -> Check {
    timed(8, "gradient-flow decay", || {
        let count = mode.pick(50, 15);
        let mut worst_fd = 0.0f64;
        let mut ratios = Vec::new();
        for seed in 0..count {
            let (f, l) = balanced_centered(seed, 10, 2, 6)?;
            let d = initial_decay_rate(&f, &l, true)?;
            let fd = finite_difference_rate(&f, &l, 1e-6);
            worst_fd = worst_fd.max((d.rate - fd).abs() / fd);
            ratios.push(d.rate / d.hsic_numerator);
        }
        let r0 = ratios[0];
        let spread = ratios.iter().map(|r| (r - r0).abs() / r0).fold(0.0f64, f64::max);
        Ok((
            worst_fd <= 0.01 && spread <= 1e-9,
            format!("max fd rel err {worst_fd:.2e}, ratio spread {spread:.1e} over {count}"),
            "fd <= 1%, ratio spread <= 1e-9".into(),
        ))
    })
}

/// All analytic checks in order.
pub fn run_validate(mode: Mode) -> Vec<Check> {
    vec![
        duality(mode, SOLVER_TOL),
        half_gaussian(mode),
        formula_vs_oracle(mode),
        two_ellipsoid_sweep(mode),
        projection_accuracy(mode),
        glue_sweep(mode),
        ntk_toys(mode),
        gradient_flow(mode),
    ]
}

//! Critical dimension and GLUE geometry of label-conditioned manifolds.
//!
//! For each Monte-Carlo sample a dichotomy `y` and a Gaussian direction `t`
//! are drawn, and `t` is projected onto the cone `{v : y_c⟨v, z⟩ ≥ 0}`. The
//! mean squared distance is the critical dimension; the dual weights of the
//! same projection give the anchor points behind `D`, `R`, `ρc` and `ρa`.

mod anchors;
mod cone;
mod nnls;
mod oracle;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DichotomyLabel, Error, Result};
use crate::manifolds::{subsample_manifolds, ManifoldSet};
use crate::rng::{child_seed, domain, substream};

pub use anchors::{
    anchor_decomposition, anchor_decomposition_with, geometry_measures, AnchorDecomposition, AnchorSample, ClassAnchor,
    PINV_CUTOFF,
};
pub use cone::{
    cone_projection, primal_active_set, separability, ConeProblem, ConeSolution, MarginCheck, SEPARABILITY_SLACK,
    SOLVER_TOL,
};
pub use nnls::{nnls_gram, NnlsSolution};
pub use oracle::{separability_curve, SeparabilityCurve};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DichotomyScheme {
    AllPairwise,
    /// `count` pairwise dichotomies drawn with replacement.
    RandomPairwise {
        count: usize,
    },
    ExplicitList(Vec<Vec<i8>>),
}

/// Labelings in `{−1, 0, +1}^C`; zero marks a class left out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DichotomyEnsemble {
    classes: usize,
    dichotomies: Vec<Vec<i8>>,
}

impl DichotomyEnsemble {
    pub fn new(classes: usize, dichotomies: Vec<Vec<i8>>) -> Result<Self> {
        if dichotomies.is_empty() {
            return Err(Error::InvalidArgument("empty dichotomy ensemble".into()));
        }
        for y in &dichotomies {
            if y.len() != classes {
                return Err(Error::Dimension(format!("dichotomy of length {} for {classes} classes", y.len())));
            }
            if y.iter().any(|&v| !(-1..=1).contains(&v)) || !y.contains(&1) || !y.contains(&-1) {
                return Err(Error::InvalidArgument(format!(
                    "dichotomy {} needs entries in {{-1,0,1}} with both signs",
                    DichotomyLabel(y.clone())
                )));
            }
        }
        Ok(DichotomyEnsemble { classes, dichotomies })
    }

    /// The single dichotomy `{a: +1, b: −1}`.
    pub fn pair(classes: usize, a: usize, b: usize) -> Result<Self> {
        let mut y = vec![0i8; classes];
        if a >= classes || b >= classes || a == b {
            return Err(Error::InvalidArgument(format!("bad class pair ({a}, {b}) for {classes} classes")));
        }
        y[a] = 1;
        y[b] = -1;
        Self::new(classes, vec![y])
    }

    pub fn len(&self) -> usize {
        self.dichotomies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dichotomies.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, i: usize) -> &[i8] {
        &self.dichotomies[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i8]> {
        self.dichotomies.iter().map(Vec::as_slice)
    }
}

pub fn sample_dichotomies(classes: usize, scheme: &DichotomyScheme, seed: u64) -> Result<DichotomyEnsemble> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
    }
    let pair = |a: usize, b: usize| {
        let mut y = vec![0i8; classes];
        y[a] = 1;
        y[b] = -1;
        y
    };
    let list = match scheme {
        DichotomyScheme::AllPairwise => {
            (0..classes).flat_map(|a| (a + 1..classes).map(move |b| (a, b))).map(|(a, b)| pair(a, b)).collect()
        }
        DichotomyScheme::RandomPairwise { count } => {
            let mut rng = substream(seed, domain::DICHOTOMY, 0);
            (0..*count)
                .map(|_| {
                    let a = rng.random_range(0..classes);
                    let mut b = rng.random_range(0..classes - 1);
                    if b >= a {
                        b += 1;
                    }
                    pair(a.min(b), a.max(b))
                })
                .collect()
        }
        DichotomyScheme::ExplicitList(list) => list.clone(),
    };
    DichotomyEnsemble::new(classes, list)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Active-set QP directly on `v`.
    Primal,
    /// NNLS on the polar cone.
    Dual,
}

/// Monte-Carlo and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlueConfig {
    pub n_samples: usize,
    pub repeats: usize,
    /// Per-class subsample size; `None` keeps every point.
    pub points_per_class: Option<usize>,
    pub mode: SolveMode,
    /// Fail on the first non-separable dichotomy instead of excluding the sample.
    pub strict: bool,
    pub solver_tol: f64,
    pub separability_slack: f64,
    /// Also compute `D`, `R`, `ρc`, `ρa` (dual mode only).
    pub geometry: bool,
    /// Rayon worker count; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for GlueConfig {
    fn default() -> Self {
        GlueConfig {
            n_samples: 200,
            repeats: 50,
            points_per_class: Some(30),
            mode: SolveMode::Dual,
            strict: false,
            solver_tol: SOLVER_TOL,
            separability_slack: SEPARABILITY_SLACK,
            geometry: true,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stderr {
    pub n_crit: Option<f64>,
    pub d: Option<f64>,
    pub r: Option<f64>,
    pub rho_c: Option<f64>,
    pub rho_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub n_crit: f64,
    pub d: Option<f64>,
    pub r: Option<f64>,
    pub rho_c: Option<f64>,
    pub rho_a: Option<f64>,
    pub stderr: Stderr,
    /// Samples drawn per repeat.
    pub n_samples: usize,
    pub repeats: usize,
    /// Fraction of samples left out (non-separable dichotomy or degenerate dual).
    pub excluded_fraction: f64,
    /// `R` hit `0/0` (reported as 0) or `x/0` (reported as infinite).
    pub r_degenerate: bool,
    pub rho_c_undefined: bool,
}

impl GeometrySummary {
    fn n_crit_only(n_crit: f64, stderr: f64, n_samples: usize, repeats: usize, excluded: f64) -> Self {
        GeometrySummary {
            n_crit,
            d: None,
            r: None,
            rho_c: None,
            rho_a: None,
            stderr: Stderr { n_crit: Some(stderr), ..Stderr::default() },
            n_samples,
            repeats,
            excluded_fraction: excluded,
            r_degenerate: false,
            rho_c_undefined: false,
        }
    }
}

pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Constraint rows `y_c z` of one dichotomy with the class each row belongs to.
pub(crate) struct Constraints {
    pub rows: DMatrix<f64>,
    pub owner: Vec<usize>,
    /// Row index into the shared embedding matrix.
    pub point: Vec<usize>,
    /// A participating class has no points.
    pub empty_class: bool,
}

pub(crate) fn build_constraints(ms: &ManifoldSet, y: &[i8]) -> Constraints {
    let emb = ms.embeddings().view();
    let n = ms.dim();
    let mut owner = Vec::new();
    let mut point = Vec::new();
    let mut empty_class = false;
    for (c, &yc) in y.iter().enumerate() {
        if yc == 0 {
            continue;
        }
        let idx = ms.indices(c);
        empty_class |= idx.is_empty();
        for &i in idx {
            owner.push(c);
            point.push(i);
        }
    }
    let rows = DMatrix::from_fn(point.len(), n, |r, j| f64::from(y[owner[r]]) * emb[[point[r], j]]);
    Constraints { rows, owner, point, empty_class }
}

pub(crate) fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// What one Monte-Carlo draw produced.
pub(crate) enum Draw {
    Solved { sq_dist: f64, sample: Option<AnchorSample> },
    Excluded,
}

pub(crate) struct DrawSettings {
    pub mode: SolveMode,
    pub strict: bool,
    pub tol: f64,
    pub slack: f64,
    pub anchors: bool,
}

/// Sample `index`: draws `(y, t)` from its own substream and solves.
pub(crate) fn draw(ms: &ManifoldSet, ens: &DichotomyEnsemble, seed: u64, index: u64, s: &DrawSettings) -> Result<Draw> {
    let mut rng = substream(seed, domain::GLUE_SAMPLE, index);
    let yi = rng.random_range(0..ens.len());
    let t = gaussian_vector(&mut rng, ms.dim());
    let y = ens.get(yi);
    let cons = build_constraints(ms, y);
    let fail = |s: &DrawSettings| -> Result<Draw> {
        if s.strict {
            Err(Error::Separability { dichotomy: DichotomyLabel(y.to_vec()) })
        } else {
            Ok(Draw::Excluded)
        }
    };
    if cons.empty_class {
        return fail(s);
    }
    let gram = &cons.rows * cons.rows.transpose();
    if !cone::separability_from_gram(&gram, s.slack)?.separable {
        return fail(s);
    }
    let prob = ConeProblem { constraints: cons.rows, target: t };
    let sol = match s.mode {
        SolveMode::Dual => cone::cone_projection_with_gram(&prob, &gram, s.tol)?,
        SolveMode::Primal => primal_active_set(&prob, s.tol)?,
    };
    let sample = s.anchors.then(|| AnchorSample::from_solution(ms, y, &cons.owner, &cons.point, &sol, prob.target));
    Ok(Draw::Solved { sq_dist: sol.sq_dist, sample })
}

/// Evaluate `f(0..n)` in parallel, keeping index order, optionally on a dedicated pool.
pub(crate) fn ordered_map<T: Send>(
    n: usize,
    workers: Option<usize>,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let run = || (0..n).into_par_iter().map(&f).collect::<Vec<Result<T>>>();
    let out = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    out.into_iter().collect()
}

/// Critical dimension of `ms` as given (no subsampling, one pass of `n_samples`).
pub fn critical_dimension(
    ms: &ManifoldSet,
    ens: &DichotomyEnsemble,
    n_samples: usize,
    seed: u64,
    mode: SolveMode,
) -> Result<GeometrySummary> {
    let cfg =
        GlueConfig { n_samples, repeats: 1, points_per_class: None, mode, geometry: false, ..GlueConfig::default() };
    estimate_geometry(ms, ens, &cfg, seed)
}

/// Full estimator: per repeat, subsample each class and run `n_samples` draws;
/// `n_crit` pools all kept draws, geometric measures average over repeats.
pub fn estimate_geometry(
    ms: &ManifoldSet,
    ens: &DichotomyEnsemble,
    cfg: &GlueConfig,
    seed: u64,
) -> Result<GeometrySummary> {
    if cfg.n_samples == 0 || cfg.repeats == 0 {
        return Err(Error::InvalidArgument("n_samples and repeats must be positive".into()));
    }
    if ens.classes() != ms.class_count() {
        return Err(Error::Dimension(format!(
            "ensemble over {} classes, manifolds have {}",
            ens.classes(),
            ms.class_count()
        )));
    }
    let geometry = cfg.geometry && cfg.mode == SolveMode::Dual;
    let settings = DrawSettings {
        mode: cfg.mode,
        strict: cfg.strict,
        tol: cfg.solver_tol,
        slack: cfg.separability_slack,
        anchors: geometry,
    };
    let mut dists = Vec::new();
    let mut excluded = 0usize;
    let mut per_repeat = Vec::new();
    for r in 0..cfg.repeats {
        let rseed = child_seed(seed, domain::GLUE_SAMPLE, r as u64);
        let sub;
        let view = match cfg.points_per_class {
            Some(m) => {
                sub = subsample_manifolds(ms, m, child_seed(seed, domain::SUBSAMPLE, r as u64))?;
                &sub
            }
            None => ms,
        };
        let draws = ordered_map(cfg.n_samples, cfg.workers, |i| draw(view, ens, rseed, i as u64, &settings))?;
        let mut samples = Vec::new();
        for d in draws {
            match d {
                Draw::Solved { sq_dist, sample } => {
                    dists.push(sq_dist);
                    samples.extend(sample);
                }
                Draw::Excluded => excluded += 1,
            }
        }
        if geometry && !samples.is_empty() {
            let dec = AnchorDecomposition::from_samples(ms.class_count(), ms.dim(), samples);
            per_repeat.push(geometry_measures(&dec)?);
        }
    }
    let total = cfg.n_samples * cfg.repeats;
    if dists.is_empty() {
        return Err(Error::Undefined(format!("all {total} samples were excluded as non-separable")));
    }
    let (n_crit, se) = mean_stderr(&dists);
    let mut out = GeometrySummary::n_crit_only(n_crit, se, cfg.n_samples, cfg.repeats, excluded as f64 / total as f64);
    if !per_repeat.is_empty() {
        let avg = |f: &dyn Fn(&GeometrySummary) -> Option<f64>| -> (Option<f64>, Option<f64>) {
            let xs: Vec<f64> = per_repeat.iter().filter_map(f).collect();
            if xs.is_empty() {
                return (None, None);
            }
            let (m, s) = mean_stderr(&xs);
            (Some(m), (xs.len() > 1).then_some(s))
        };
        let (d, d_se) = avg(&|g| g.d);
        let (r, r_se) = avg(&|g| g.r);
        let (rc, rc_se) = avg(&|g| g.rho_c);
        let (ra, ra_se) = avg(&|g| g.rho_a);
        out.d = d;
        out.r = r;
        out.rho_c = rc;
        out.rho_a = ra;
        out.stderr.d = if per_repeat.len() == 1 { per_repeat[0].stderr.d } else { d_se };
        out.stderr.r = r_se;
        out.stderr.rho_c = rc_se;
        out.stderr.rho_a = ra_se;
        out.r_degenerate = per_repeat.iter().any(|g| g.r_degenerate);
        out.rho_c_undefined = per_repeat.iter().all(|g| g.rho_c_undefined);
        let degenerate: f64 = per_repeat.iter().map(|g| g.excluded_fraction).sum::<f64>() / per_repeat.len() as f64;
        out.excluded_fraction += degenerate * (1.0 - out.excluded_fraction);
    }
    Ok(out)
}

/// `C×C` matrix of single-pair critical dimensions; zero diagonal.
pub fn pairwise_ncrit_matrix(ms: &ManifoldSet, n_samples: usize, seed: u64) -> Result<Array2<f64>> {
    let c = ms.class_count();
    if let Some(e) = ms.empty_classes().first() {
        return Err(Error::InvalidArgument(format!("class {e} has no points")));
    }
    let pairs: Vec<(usize, usize)> = (0..c).flat_map(|a| (a + 1..c).map(move |b| (a, b))).collect();
    let values = ordered_map(pairs.len(), None, |k| {
        let (a, b) = pairs[k];
        let ens = DichotomyEnsemble::pair(c, a, b)?;
        critical_dimension(ms, &ens, n_samples, child_seed(seed, domain::DICHOTOMY, k as u64), SolveMode::Dual)
            .map(|g| g.n_crit)
    })?;
    let mut m = Array2::zeros((c, c));
    for (&(a, b), v) in pairs.iter().zip(values) {
        m[[a, b]] = v;
        m[[b, a]] = v;
    }
    Ok(m)
}

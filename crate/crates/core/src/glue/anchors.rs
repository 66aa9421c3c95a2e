//! Anchor points from the dual weights, and the measures `D`, `R`, `ρc`, `ρa`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{
    draw, mean_stderr, ordered_map, ConeSolution, DichotomyEnsemble, Draw, DrawSettings, GeometrySummary, SolveMode,
    Stderr,
};
use crate::error::{Error, Result};
use crate::manifolds::ManifoldSet;

/// Singular values below this fraction of the largest are dropped in pseudoinverses.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Anchor of one class for one `(y, t)` draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAnchor {
    pub class: usize,
    /// Total dual weight `λ_c` on the class.
    pub weight: f64,
    pub point: Vec<f64>,
    /// Convex-combination weights over embedding rows; they sum to 1.
    pub hull_weights: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSample {
    pub dichotomy: Vec<i8>,
    pub t: Vec<f64>,
    /// Classes with positive dual weight; empty when `t` already lies in the cone.
    pub anchors: Vec<ClassAnchor>,
}

impl AnchorSample {
    pub(crate) fn from_solution(
        ms: &ManifoldSet,
        y: &[i8],
        owner: &[usize],
        point: &[usize],
        sol: &ConeSolution,
        t: DVector<f64>,
    ) -> AnchorSample {
        let emb = ms.embeddings().view();
        let mut anchors: Vec<ClassAnchor> = Vec::new();
        for (r, &lam) in sol.dual_weights.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            let c = owner[r];
            let pos = match anchors.iter().position(|a| a.class == c) {
                Some(p) => p,
                None => {
                    anchors.push(ClassAnchor {
                        class: c,
                        weight: 0.0,
                        point: vec![0.0; ms.dim()],
                        hull_weights: vec![],
                    });
                    anchors.len() - 1
                }
            };
            let a = &mut anchors[pos];
            a.weight += lam;
            a.hull_weights.push((point[r], lam));
            for (j, v) in a.point.iter_mut().enumerate() {
                *v += lam * emb[[point[r], j]];
            }
        }
        for a in &mut anchors {
            let w = a.weight;
            a.point.iter_mut().for_each(|v| *v /= w);
            a.hull_weights.iter_mut().for_each(|(_, h)| *h /= w);
        }
        anchors.sort_by_key(|a| a.class);
        AnchorSample { dichotomy: y.to_vec(), t: t.as_slice().to_vec(), anchors }
    }

    /// Number of classes the dichotomy compares (`P_y`).
    pub fn participants(&self) -> usize {
        self.dichotomy.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_degenerate(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Anchor-form objective `(⟨t, u⟩ / ‖u‖)²` at `u = Σ_c y_c λ_c s_c`; zero when `u = 0`.
    pub fn dual_objective(&self) -> f64 {
        let n = self.t.len();
        let mut u = vec![0.0; n];
        for a in &self.anchors {
            let s = f64::from(self.dichotomy[a.class]) * a.weight;
            for j in 0..n {
                u[j] += s * a.point[j];
            }
        }
        let norm2: f64 = u.iter().map(|x| x * x).sum();
        if norm2 == 0.0 {
            return 0.0;
        }
        let dot: f64 = u.iter().zip(&self.t).map(|(a, b)| a * b).sum();
        dot * dot / norm2
    }
}

/// Anchor samples with the per-class anchor centers `s_{c,0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorDecomposition {
    pub classes: usize,
    pub dim: usize,
    /// `C×N`; rows of classes that never received an anchor are zero.
    pub centers: Vec<Vec<f64>>,
    /// Number of samples that contributed to each center.
    pub center_counts: Vec<usize>,
    pub samples: Vec<AnchorSample>,
}

impl AnchorDecomposition {
    pub fn from_samples(classes: usize, dim: usize, samples: Vec<AnchorSample>) -> Self {
        let mut centers = vec![vec![0.0; dim]; classes];
        let mut counts = vec![0usize; classes];
        for s in &samples {
            for a in &s.anchors {
                counts[a.class] += 1;
                for (c, v) in centers[a.class].iter_mut().zip(&a.point) {
                    *c += v;
                }
            }
        }
        for (row, &k) in centers.iter_mut().zip(&counts) {
            if k > 0 {
                row.iter_mut().for_each(|v| *v /= k as f64);
            }
        }
        AnchorDecomposition { classes, dim, centers, center_counts: counts, samples }
    }

    /// Axes `s_c(y,t) − s_{c,0}` of one sample, by class.
    pub fn axes(&self, sample: &AnchorSample) -> Vec<(usize, Vec<f64>)> {
        sample
            .anchors
            .iter()
            .map(|a| (a.class, a.point.iter().zip(&self.centers[a.class]).map(|(p, c)| p - c).collect()))
            .collect()
    }

    pub fn degenerate_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.is_degenerate()).count() as f64 / self.samples.len() as f64
    }
}

/// Anchors of `n_samples` dual solves on `ms` as given.
pub fn anchor_decomposition(
    ms: &ManifoldSet,
    ens: &DichotomyEnsemble,
    n_samples: usize,
    seed: u64,
) -> Result<AnchorDecomposition> {
    anchor_decomposition_with(ms, ens, n_samples, seed, None)
}

pub fn anchor_decomposition_with(
    ms: &ManifoldSet,
    ens: &DichotomyEnsemble,
    n_samples: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<AnchorDecomposition> {
    let settings = DrawSettings {
        mode: SolveMode::Dual,
        strict: false,
        tol: super::SOLVER_TOL,
        slack: super::SEPARABILITY_SLACK,
        anchors: true,
    };
    let draws = ordered_map(n_samples, workers, |i| draw(ms, ens, seed, i as u64, &settings))?;
    let samples = draws
        .into_iter()
        .filter_map(|d| match d {
            Draw::Solved { sample, .. } => sample,
            Draw::Excluded => None,
        })
        .collect();
    Ok(AnchorDecomposition::from_samples(ms.class_count(), ms.dim(), samples))
}

/// `xᵀ M† x` for symmetric PSD `M`, dropping eigenvalues below the cutoff.
fn pinv_form(m: DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > PINV_CUTOFF * top {
            let p = eig.eigenvectors.column(i).dot(x);
            acc += p * p / l;
        }
    }
    acc
}

fn abs_cos(a: &[f64], b: &[f64]) -> Option<f64> {
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).abs().min(1.0))
}

/// `D`, `R`, `ρc`, `ρa` from an anchor decomposition.
///
/// Per sample the quadratic forms use only the anchored classes of that
/// dichotomy. Degenerate samples (no anchors) are left out of every average
/// and reported through `excluded_fraction`.
pub fn geometry_measures(dec: &AnchorDecomposition) -> Result<GeometrySummary> {
    let valid: Vec<&AnchorSample> = dec.samples.iter().filter(|s| !s.is_degenerate()).collect();
    if valid.is_empty() {
        return Err(Error::Undefined("no non-degenerate anchor samples".into()));
    }
    let n = dec.dim;
    let mut d_terms = Vec::with_capacity(valid.len());
    let mut b_sum = 0.0;
    let mut c_sum = 0.0;
    let mut axis_cos = Vec::new();
    for s in &valid {
        let axes = dec.axes(s);
        let q = axes.len();
        let t = DVector::from_column_slice(&s.t);
        let s1 = DMatrix::from_fn(q, n, |i, j| axes[i].1[j]);
        let s0 = DMatrix::from_fn(q, n, |i, j| dec.centers[axes[i].0][j]);
        let s1t = &s1 * &t;
        let m1 = &s1 * s1.transpose();
        let m2 = &s0 * s0.transpose() + &m1;
        let b = pinv_form(m1, &s1t);
        let c = pinv_form(m2, &s1t);
        d_terms.push(b / s.participants() as f64);
        b_sum += b;
        c_sum += c;
        for i in 0..q {
            for j in 0..q {
                if i != j {
                    axis_cos.extend(abs_cos(&axes[i].1, &axes[j].1));
                }
            }
        }
    }
    let (d, d_se) = mean_stderr(&d_terms);
    let m = valid.len() as f64;
    let (ec, ebc) = (c_sum / m, (b_sum - c_sum) / m);
    let scale = (b_sum / m).abs().max(f64::MIN_POSITIVE);
    let tiny = 1e-12 * scale;
    let (r, r_degenerate) = if ebc.abs() <= tiny && ec.abs() <= tiny {
        (0.0, true)
    } else if ebc.abs() <= tiny {
        (f64::INFINITY, true)
    } else {
        ((ec / ebc).max(0.0).sqrt(), false)
    };

    let live: Vec<usize> = (0..dec.classes).filter(|&c| dec.center_counts[c] > 0).collect();
    let mut center_cos = Vec::new();
    for &a in &live {
        for &b in &live {
            if a != b {
                center_cos.extend(abs_cos(&dec.centers[a], &dec.centers[b]));
            }
        }
    }
    let rho_c = (!center_cos.is_empty()).then(|| center_cos.iter().sum::<f64>() / center_cos.len() as f64);
    let rho_a = (!axis_cos.is_empty()).then(|| axis_cos.iter().sum::<f64>() / axis_cos.len() as f64);
    Ok(GeometrySummary {
        n_crit: valid.iter().map(|s| s.dual_objective()).sum::<f64>() / dec.samples.len() as f64,
        d: Some(d),
        r: Some(r),
        rho_c,
        rho_a,
        stderr: Stderr { d: Some(d_se), ..Stderr::default() },
        n_samples: dec.samples.len(),
        repeats: 1,
        excluded_fraction: dec.degenerate_fraction(),
        r_degenerate,
        rho_c_undefined: rho_c.is_none(),
    })
}

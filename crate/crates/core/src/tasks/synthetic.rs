use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::manifolds::{group_by_label, EmbeddingMatrix, LabelVector, ManifoldSet};
use crate::rng::{domain, substream};

/// Two Gaussian classes at `+mean` (label 0) and `-mean` (label 1) with
/// diagonal covariance `diag(var)`.
pub fn gaussian_pair(
    mean: &[f64],
    var: &[f64],
    m_per_class: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, LabelVector)> {
    if mean.len() != var.len() || mean.is_empty() {
        return Err(Error::Dimension("mean and variance lengths differ".into()));
    }
    if var.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("variances must be positive".into()));
    }
    if m_per_class == 0 {
        return Err(Error::InvalidArgument("need at least one point per class".into()));
    }
    let dim = mean.len();
    let mut rng = substream(seed, domain::DATA_DRAW, 0);
    let mut x = Array2::zeros((2 * m_per_class, dim));
    let mut labels = Vec::with_capacity(2 * m_per_class);
    for class in 0..2 {
        let sign = if class == 0 { 1.0 } else { -1.0 };
        for i in 0..m_per_class {
            let row = class * m_per_class + i;
            for j in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                x[[row, j]] = sign * mean[j] + var[j].sqrt() * z;
            }
            labels.push(class as u32);
        }
    }
    Ok((EmbeddingMatrix::new(x)?, LabelVector::new(labels, 2)?))
}

/// Two-ellipsoid toy: means `±(mu, 0)`, covariance `diag(sigma1², sigma_perp²)`.
pub fn two_ellipsoid_labeled(
    mu: f64,
    sigma1: f64,
    sigma_perp: f64,
    m_per_class: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, LabelVector)> {
    if !(sigma1 > 0.0 && sigma_perp > 0.0) {
        return Err(Error::InvalidArgument("standard deviations must be positive".into()));
    }
    gaussian_pair(&[mu, 0.0], &[sigma1 * sigma1, sigma_perp * sigma_perp], m_per_class, seed)
}

pub fn two_ellipsoid(mu: f64, sigma1: f64, sigma_perp: f64, m_per_class: usize, seed: u64) -> Result<ManifoldSet> {
    let (x, y) = two_ellipsoid_labeled(mu, sigma1, sigma_perp, m_per_class, seed)?;
    group_by_label(x, &y)
}

/// Bayes accuracy of thresholding the projection onto direction `theta`.
pub fn analytic_projection_accuracy(theta: f64, mu: f64, sigma1: f64, sigma_perp: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let spread = (sigma1 * sigma1 * c * c + sigma_perp * sigma_perp * s * s).sqrt();
    let z = mu * c.abs() / spread;
    Normal::standard().cdf(z)
}

/// Ground-truth knobs of the Gaussian manifold generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianManifoldParams {
    /// Number of axes spanned by each manifold.
    pub dimension: usize,
    /// Root-mean-square distance of points from their center (centers have unit norm).
    pub radius: f64,
    /// Pairwise cosine between manifold centers.
    pub center_alignment: f64,
    /// Cosine between corresponding axes of different manifolds.
    pub axis_alignment: f64,
}

impl Default for GaussianManifoldParams {
    fn default() -> Self {
        Self { dimension: 8, radius: 1.0, center_alignment: 0.2, axis_alignment: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Dimension,
    Radius,
    CenterAlignment,
    AxisAlignment,
}

impl SweepParameter {
    pub fn apply(self, base: GaussianManifoldParams, value: f64) -> GaussianManifoldParams {
        let mut p = base;
        match self {
            SweepParameter::Dimension => p.dimension = value.round() as usize,
            SweepParameter::Radius => p.radius = value,
            SweepParameter::CenterAlignment => p.center_alignment = value,
            SweepParameter::AxisAlignment => p.axis_alignment = value,
        }
        p
    }
}

#[derive(Debug, Clone)]
pub struct SuiteMember {
    pub value: f64,
    pub params: GaussianManifoldParams,
    pub manifolds: ManifoldSet,
}

fn orthonormal_columns(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = substream(seed, domain::DATA_DRAW, 1);
    let g = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// One `P`-class manifold set with `M` points each in `R^N`.
///
/// Centers are `sqrt(ρc)·g + sqrt(1-ρc)·u_i` and axes `sqrt(ρa)·s_k + sqrt(1-ρa)·v_{i,k}`
/// for mutually orthonormal `g, u_i, s_k, v_{i,k}`, so centers have unit norm and
/// pairwise cosine `ρc`, each manifold's axes are orthonormal, and corresponding
/// axes of different manifolds have cosine `ρa`. Points are
/// `center + radius · Σ_k ξ_k axis_k / sqrt(d)` with standard normal `ξ`.
pub fn gaussian_manifolds(
    n: usize,
    p: usize,
    m: usize,
    params: GaussianManifoldParams,
    seed: u64,
) -> Result<ManifoldSet> {
    let d = params.dimension;
    if p < 2 || m == 0 || d == 0 {
        return Err(Error::InvalidArgument("need P >= 2, M >= 1, dimension >= 1".into()));
    }
    for (name, v) in [("center_alignment", params.center_alignment), ("axis_alignment", params.axis_alignment)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    if params.radius < 0.0 {
        return Err(Error::InvalidArgument("radius must be non-negative".into()));
    }
    let needed = 1 + p + d + p * d;
    if needed > n {
        return Err(Error::Dimension(format!(
            "generator needs {needed} orthogonal directions, ambient dimension is {n}"
        )));
    }
    let q = orthonormal_columns(n, needed, seed);
    let col = |j: usize| Array1::from_iter(q.column(j).iter().copied());
    let (rc, ra) = (params.center_alignment, params.axis_alignment);
    let shared_center = col(0);
    let mut rng = substream(seed, domain::DATA_DRAW, 2);
    let mut x = Array2::zeros((p * m, n));
    let mut labels = Vec::with_capacity(p * m);
    for class in 0..p {
        let center = &shared_center * rc.sqrt() + &col(1 + class) * (1.0 - rc).sqrt();
        let axes: Vec<Array1<f64>> =
            (0..d).map(|k| &col(1 + p + k) * ra.sqrt() + &col(1 + p + d + class * d + k) * (1.0 - ra).sqrt()).collect();
        for i in 0..m {
            let mut point = center.clone();
            for axis in &axes {
                let xi: f64 = rng.sample(StandardNormal);
                point.scaled_add(params.radius * xi / (d as f64).sqrt(), axis);
            }
            x.row_mut(class * m + i).assign(&point);
            labels.push(class as u32);
        }
    }
    group_by_label(EmbeddingMatrix::new(x)?, &LabelVector::new(labels, p)?)
}

/// Sweep one ground-truth parameter, holding the others at `base`.
pub fn gaussian_manifold_suite(
    n: usize,
    p: usize,
    m: usize,
    sweep: SweepParameter,
    values: &[f64],
    base: GaussianManifoldParams,
    seed: u64,
) -> Result<Vec<SuiteMember>> {
    values
        .iter()
        .map(|&value| {
            let params = sweep.apply(base, value);
            let manifolds = gaussian_manifolds(n, p, m, params, seed)?;
            Ok(SuiteMember { value, params, manifolds })
        })
        .collect()
}

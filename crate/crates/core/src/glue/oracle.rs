//! Empirical `p(N_proj)`: how often randomly projected manifolds stay separable.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::cone::separability;
use super::{build_constraints, ordered_map, DichotomyEnsemble};
use crate::error::{DichotomyLabel, Error, Result};
use crate::manifolds::ManifoldSet;
use crate::rng::{domain, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityCurve {
    pub dims: Vec<usize>,
    pub p: Vec<f64>,
    pub trials_per_dim: usize,
    /// `Σ_{d=1}^{N} (1 − p(d))`, linearly interpolating `p` between evaluated dims.
    pub n_crit: f64,
    pub slack: f64,
}

/// Fraction of (Gaussian projection, uniform dichotomy) draws that remain
/// separable, for each projected dimension in `dims`.
pub fn separability_curve(
    ms: &ManifoldSet,
    ens: &DichotomyEnsemble,
    dims: &[usize],
    trials_per_dim: usize,
    seed: u64,
    slack: f64,
) -> Result<SeparabilityCurve> {
    let n = ms.dim();
    if dims.is_empty() || trials_per_dim == 0 {
        return Err(Error::InvalidArgument("need at least one dimension and one trial".into()));
    }
    let mut dims = dims.to_vec();
    dims.sort_unstable();
    dims.dedup();
    if dims[0] == 0 || *dims.last().unwrap() > n {
        return Err(Error::InvalidArgument(format!("projection dims must lie in [1, {n}]")));
    }
    for y in ens.iter() {
        let cons = build_constraints(ms, y);
        if cons.empty_class || !separability(&cons.rows, slack)?.separable {
            return Err(Error::Separability { dichotomy: DichotomyLabel(y.to_vec()) });
        }
    }
    let jobs: Vec<(usize, usize)> = dims.iter().flat_map(|&d| (0..trials_per_dim).map(move |k| (d, k))).collect();
    let hits = ordered_map(jobs.len(), None, |j| {
        let (d, k) = jobs[j];
        let mut rng = substream(seed, domain::PROJECTION, ((d as u64) << 32) | k as u64);
        let y = ens.get(rng.random_range(0..ens.len()));
        let proj = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cons = build_constraints(ms, y);
        let projected = cons.rows * proj.transpose();
        Ok(separability(&projected, slack)?.separable)
    })?;
    let p: Vec<f64> =
        hits.chunks(trials_per_dim).map(|c| c.iter().filter(|&&h| h).count() as f64 / trials_per_dim as f64).collect();
    let n_crit = (1..=n).map(|d| 1.0 - interpolate(&dims, &p, d, n)).sum();
    Ok(SeparabilityCurve { dims, p, trials_per_dim, n_crit, slack })
}

/// `p(d)` from the evaluated grid; `p(N) = 1` is known, below the first
/// evaluated dim the first value is held.
fn interpolate(dims: &[usize], p: &[f64], d: usize, n: usize) -> f64 {
    let mut xs: Vec<f64> = dims.iter().map(|&x| x as f64).collect();
    let mut ys = p.to_vec();
    if *dims.last().unwrap() < n {
        xs.push(n as f64);
        ys.push(1.0);
    }
    let x = d as f64;
    if x <= xs[0] {
        return ys[0];
    }
    for i in 1..xs.len() {
        if x <= xs[i] {
            let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            return ys[i - 1] + w * (ys[i] - ys[i - 1]);
        }
    }
    *ys.last().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_fills_gaps() {
        assert_eq!(interpolate(&[1, 3], &[0.0, 1.0], 2, 3), 0.5);
        assert_eq!(interpolate(&[2], &[0.4], 1, 4), 0.4);
        assert!((interpolate(&[2], &[0.4], 3, 4) - 0.7).abs() < 1e-12);
    }
}

//! Lawson–Hanson active-set NNLS on the normal equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solution of `min ½ λᵀGλ − hᵀλ` over `λ ≥ 0`.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Largest remaining positive entry of the negative gradient `h − Gλ`.
    pub residual: f64,
}

/// Solve `G_PP z = h_P`; falls back to a truncated SVD when Cholesky fails.
fn solve_passive(gram: &DMatrix<f64>, rhs: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let p = passive.len();
    let g = DMatrix::from_fn(p, p, |i, j| gram[(passive[i], passive[j])]);
    let h = DVector::from_fn(p, |i, _| rhs[passive[i]]);
    if let Some(ch) = g.clone().cholesky() {
        let z = ch.solve(&h);
        if z.iter().all(|v| v.is_finite()) {
            return z;
        }
    }
    let svd = g.svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-12;
    svd.solve(&h, cutoff).unwrap_or_else(|_| DVector::zeros(p))
}

/// Nonnegative least squares in Gram form.
///
/// `gram = MᵀM` and `rhs = Mᵀb` for the original problem `min ‖Mλ − b‖`.
/// Optimality is declared when every free coordinate has gradient
/// `h_j − (Gλ)_j ≤ tol · scale`. The iteration cap is `50·k`.
pub fn nnls_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>, tol: f64, scale: f64) -> Result<NnlsSolution> {
    let k = rhs.len();
    let cap = 50 * k.max(1);
    let thresh = tol * scale.max(f64::MIN_POSITIVE);
    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    // coordinates whose latest admission failed numerically; cleared whenever x changes
    let mut blocked = vec![false; k];
    let mut iterations = 0;

    loop {
        let w = rhs - gram * &x;
        let mut best: Option<usize> = None;
        for j in 0..k {
            if !passive[j] && !blocked[j] && w[j] > thresh && best.is_none_or(|b| w[j] > w[b]) {
                best = Some(j);
            }
        }
        let Some(j) = best else {
            let residual = (0..k).filter(|&j| !passive[j]).map(|j| w[j]).fold(0.0f64, f64::max);
            return Ok(NnlsSolution { x, iterations, residual });
        };
        passive[j] = true;
        let mut first = true;
        loop {
            iterations += 1;
            if iterations > cap {
                let residual = (0..k).filter(|&j| !passive[j]).map(|j| w[j]).fold(0.0f64, f64::max);
                return Err(Error::Convergence { iterations, residual });
            }
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let z = solve_passive(gram, rhs, &idx);
            if z.iter().all(|&v| v > 0.0) {
                for (pos, &i) in idx.iter().enumerate() {
                    x[i] = z[pos];
                }
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            if first {
                let pos = idx.iter().position(|&i| i == j).unwrap();
                if z[pos] <= 0.0 {
                    // gradient said j should enter but the subproblem disagrees: rounding
                    passive[j] = false;
                    blocked[j] = true;
                    break;
                }
            }
            first = false;
            let mut alpha = f64::INFINITY;
            for (pos, &i) in idx.iter().enumerate() {
                if z[pos] <= 0.0 {
                    let a = x[i] / (x[i] - z[pos]);
                    if a < alpha {
                        alpha = a;
                    }
                }
            }
            for (pos, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[pos] - x[i]);
            }
            for &i in &idx {
                if x[i] <= 1e-14 * scale.max(1.0) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            blocked.iter_mut().for_each(|b| *b = false);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_minimum_inside_orthant() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let h = DVector::from_vec(vec![1.0, 1.0]);
        let s = nnls_gram(&g, &h, 1e-12, 1.0).unwrap();
        let direct = g.clone().lu().solve(&h).unwrap();
        assert!((s.x - direct).norm() < 1e-12);
    }

    #[test]
    fn clamps_negative_coordinate() {
        // min ½(λ1² + λ2²) − λ1 + λ2 → (1, 0)
        let g = DMatrix::identity(2, 2);
        let h = DVector::from_vec(vec![1.0, -1.0]);
        let s = nnls_gram(&g, &h, 1e-12, 1.0).unwrap();
        assert_eq!(s.x.as_slice(), &[1.0, 0.0]);
    }
}

//! Projection onto `{v : Av ≥ 0}` and hard-margin separability.
//!
//! By Moreau's decomposition `t = P_K(t) + P_K°(t)` where the polar cone
//! `K°` is generated by the negated constraint rows. The projection onto
//! `K°` is an NNLS problem over the rows, which gives `v* = t + Aᵀλ` and the
//! per-row dual weights `λ` at once.

use nalgebra::{DMatrix, DVector};

use super::nnls::nnls_gram;
use crate::error::{Error, Result};

/// Default solver tolerance.
pub const SOLVER_TOL: f64 = 1e-9;

/// Slack on the unit-norm hard-margin test used to call a point set separable.
pub const SEPARABILITY_SLACK: f64 = 1e-7;

/// `min ‖v − t‖²` subject to `A v ≥ 0`, one row of `A` per constraint `y_c z`.
#[derive(Debug, Clone)]
pub struct ConeProblem {
    pub constraints: DMatrix<f64>,
    pub target: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub v_star: DVector<f64>,
    pub sq_dist: f64,
    /// One weight per constraint row; zero on inactive rows.
    pub dual_weights: DVector<f64>,
    pub iterations: usize,
}

impl ConeProblem {
    pub fn new(constraints: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        if constraints.ncols() != target.len() {
            return Err(Error::Dimension(format!(
                "constraints have {} columns, target has length {}",
                constraints.ncols(),
                target.len()
            )));
        }
        if constraints.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("cone problem has non-finite entries".into()));
        }
        Ok(ConeProblem { constraints, target })
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.nrows()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        &self.constraints * self.constraints.transpose()
    }

    fn scale(&self) -> f64 {
        let row = self.constraints.row_iter().map(|r| r.norm()).fold(0.0f64, f64::max);
        row * self.target.norm().max(1.0)
    }

    /// Primal objective `‖v − t‖²`.
    pub fn primal_objective(&self, v: &DVector<f64>) -> f64 {
        (v - &self.target).norm_squared()
    }

    /// Largest violation `max(0, −a_jᵀv)` over the rows.
    pub fn infeasibility(&self, v: &DVector<f64>) -> f64 {
        (&self.constraints * v).iter().fold(0.0f64, |m, &x| m.max(-x))
    }
}

/// Solve through the polar cone (NNLS on the constraint rows).
pub fn cone_projection(prob: &ConeProblem, tol: f64) -> Result<ConeSolution> {
    cone_projection_with_gram(prob, &prob.gram(), tol)
}

pub(crate) fn cone_projection_with_gram(prob: &ConeProblem, gram: &DMatrix<f64>, tol: f64) -> Result<ConeSolution> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let a = &prob.constraints;
    let rhs = -(a * &prob.target);
    let sol = nnls_gram(gram, &rhs, tol, prob.scale())?;
    let lam = sol.x;
    let push = a.transpose() * &lam;
    let v_star = &prob.target + &push;
    Ok(ConeSolution { sq_dist: push.norm_squared(), v_star, dual_weights: lam, iterations: sol.iterations })
}

/// Primal active-set method working directly on `v`.
///
/// Starts from the feasible point `v = 0` and keeps a linearly independent
/// working set; the step is the projection of `t` onto the null space of the
/// working rows. Multipliers come out of the same small solve.
pub fn primal_active_set(prob: &ConeProblem, tol: f64) -> Result<ConeSolution> {
    let a = &prob.constraints;
    let (k, n) = a.shape();
    let t = &prob.target;
    let tnorm = t.norm();
    let rnorm = a.row_iter().map(|r| r.norm()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let cap = 50 * (k + n).max(1);
    let mut v = DVector::zeros(n);
    let mut work: Vec<usize> = Vec::new();
    for iter in 1..=cap {
        // u = projection of t onto null(A_W); μ solves (A_W A_Wᵀ) μ = −A_W t
        let (u, mu) = if work.is_empty() {
            (t.clone(), DVector::zeros(0))
        } else {
            let aw = DMatrix::from_fn(work.len(), n, |i, j| a[(work[i], j)]);
            let g = &aw * aw.transpose();
            let rhs = -(&aw * t);
            let mu = match g.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => g.svd(true, true).solve(&rhs, 1e-12).map_err(|e| Error::InvalidArgument(e.into()))?,
            };
            (t + aw.transpose() * &mu, mu)
        };
        let p = &u - &v;
        if p.norm() <= tol * tnorm.max(1.0) {
            let worst = (0..work.len())
                .filter(|&i| mu[i] < -tol * tnorm.max(1.0) / rnorm)
                .min_by(|&x, &y| mu[x].total_cmp(&mu[y]));
            match worst {
                None => {
                    let mut weights = DVector::zeros(k);
                    for (i, &j) in work.iter().enumerate() {
                        weights[j] = mu[i].max(0.0);
                    }
                    return Ok(ConeSolution {
                        sq_dist: prob.primal_objective(&u),
                        v_star: u,
                        dual_weights: weights,
                        iterations: iter,
                    });
                }
                Some(i) => {
                    work.remove(i);
                    continue;
                }
            }
        }
        let ap = a * &p;
        let av = a * &v;
        let mut alpha = 1.0;
        let mut block = None;
        let pn = p.norm();
        for j in 0..k {
            if ap[j] < -1e-14 * rnorm * pn && !work.contains(&j) {
                let step = av[j].max(0.0) / -ap[j];
                if step < alpha {
                    alpha = step;
                    block = Some(j);
                }
            }
        }
        v += alpha * p;
        if let Some(j) = block {
            work.push(j);
        }
    }
    Err(Error::Convergence { iterations: cap, residual: prob.infeasibility(&v) })
}

/// Outcome of the hard-margin test on unit-normalized rows.
#[derive(Debug, Clone, Copy)]
pub struct MarginCheck {
    pub separable: bool,
    /// `γ²/(1+γ²)` for the angular margin `γ`; zero when not separable.
    pub margin_stat: f64,
}

/// Is there `v` with `a_jᵀv > 0` for every nonzero row?
///
/// Solved as least-distance programming `min ‖v‖` s.t. `Âv ≥ 1` on
/// unit-normalized rows `Â`, via NNLS on `[Âᵀ; 1ᵀ]`. With `u` the NNLS
/// solution, `1 − Σu = γ²/(1+γ²)`; the set is called separable when that
/// exceeds `slack`.
pub fn separability(constraints: &DMatrix<f64>, slack: f64) -> Result<MarginCheck> {
    separability_from_gram(&(constraints * constraints.transpose()), slack)
}

/// Same test given only the row Gram matrix `AAᵀ`.
pub(crate) fn separability_from_gram(gram: &DMatrix<f64>, slack: f64) -> Result<MarginCheck> {
    let keep: Vec<usize> = (0..gram.nrows()).filter(|&i| gram[(i, i)] > 0.0).collect();
    if keep.is_empty() {
        return Ok(MarginCheck { separable: true, margin_stat: 1.0 });
    }
    let norm: Vec<f64> = keep.iter().map(|&i| gram[(i, i)].sqrt()).collect();
    let k = keep.len();
    let g = DMatrix::from_fn(k, k, |i, j| gram[(keep[i], keep[j])] / (norm[i] * norm[j]) + 1.0);
    let rhs = DVector::from_element(k, 1.0);
    let sol = nnls_gram(&g, &rhs, SOLVER_TOL, 1.0)?;
    let stat = 1.0 - sol.x.sum();
    Ok(MarginCheck { separable: stat > slack, margin_stat: stat.max(0.0) })
}

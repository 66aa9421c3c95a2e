//! Last-layer NTK-label alignment.
//!
//! The last-layer NTK is `K = ΦΦᵀ` repeated once per class on the diagonal.
//! The label kernel is `OOᵀ` for the one-hot matrix `O`. The replication
//! factor cancels in the normalized score, so everything reduces to traces of
//! `K` and the centered one-hot matrix `Ỹ = HO`.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Split;
use crate::error::{Error, Result};
use crate::manifolds::{EmbeddingMatrix, LabelVector};

/// Above this many samples the score is computed from `n × N` and `n × C`
/// factors instead of `n × n` kernels.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    k: Array2<f64>,
}

impl GramMatrix {
    /// `K = ΦΦᵀ` for row-wise features.
    pub fn from_features(features: ArrayView2<'_, f64>) -> Self {
        GramMatrix { k: features.dot(&features.t()) }
    }

    /// Wrap an explicit kernel after checking symmetry and positive semidefiniteness.
    pub fn new(k: Array2<f64>) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != n {
            return Err(Error::Dimension(format!("kernel is {}x{}", n, k.ncols())));
        }
        let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (k[[i, j]] - k[[j, i]]).abs() > 1e-10 * scale.max(1.0) {
                    return Err(Error::InvalidArgument(format!("kernel is not symmetric at ({i}, {j})")));
                }
            }
        }
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| k[[i, j]]);
        let norm = m.norm();
        let min = m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if n > 0 && min < -1e-8 * norm {
            return Err(Error::InvalidArgument(format!("kernel is not positive semidefinite (eigenvalue {min:.3e})")));
        }
        Ok(GramMatrix { k })
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.k
    }

    /// One-hot label kernel `L_ij = 1[y_i = y_j]`.
    pub fn labels(labels: &LabelVector) -> Self {
        let y = labels.as_slice();
        let n = y.len();
        GramMatrix { k: Array2::from_shape_fn((n, n), |(i, j)| f64::from(u8::from(y[i] == y[j]))) }
    }
}

/// Double-centered copy of `k` by row, column and grand-mean subtraction.
fn double_center(k: &Array2<f64>) -> Array2<f64> {
    let n = k.nrows() as f64;
    let rows = k.sum_axis(Axis(1)) / n;
    let cols = k.sum_axis(Axis(0)) / n;
    let grand = rows.sum() / n;
    let mut out = k.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v += grand - rows[i] - cols[j];
    }
    out
}

/// `tr(K H K₂ H) / (n−1)²`.
pub fn hsic(k: &GramMatrix, k2: &GramMatrix) -> Result<f64> {
    let n = k.n();
    if k2.n() != n {
        return Err(Error::Dimension(format!("kernels have sizes {n} and {}", k2.n())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("hsic needs at least two samples".into()));
    }
    // H is idempotent, so centering one side is enough
    let kc = double_center(&k.k);
    let tr: f64 = kc.iter().zip(k2.k.t().iter()).map(|(a, b)| a * b).sum();
    Ok(tr / ((n - 1) * (n - 1)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Clean,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScore {
    pub value: f64,
    pub split: Split,
    pub label_source: LabelSource,
}

fn check_inputs(features: &EmbeddingMatrix, labels: &LabelVector) -> Result<()> {
    let n = features.n_samples();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{n} feature rows but {} labels", labels.len())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("alignment needs at least two samples".into()));
    }
    if labels.distinct() < 2 {
        return Err(Error::Undefined("alignment with a single label present".into()));
    }
    Ok(())
}

fn centered(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    &x - &mean
}

fn one_hot(labels: &LabelVector) -> Array2<f64> {
    let mut o = Array2::zeros((labels.len(), labels.classes()));
    for (i, &y) in labels.as_slice().iter().enumerate() {
        o[[i, y as usize]] = 1.0;
    }
    o
}

fn frob2(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// CKA between the last-layer NTK and the label kernel.
pub fn alignment_value(features: &EmbeddingMatrix, labels: &LabelVector) -> Result<f64> {
    alignment_value_with(features, labels, DENSE_LIMIT)
}

/// As [`alignment_value`], switching to the factored path when `n > dense_limit`.
pub fn alignment_value_with(features: &EmbeddingMatrix, labels: &LabelVector, dense_limit: usize) -> Result<f64> {
    check_inputs(features, labels)?;
    let (kl, kk, ll) = if features.n_samples() > dense_limit {
        let phi = centered(features.view());
        let y = centered(one_hot(labels).view());
        (frob2(&phi.t().dot(&y)), frob2(&phi.t().dot(&phi)), frob2(&y.t().dot(&y)))
    } else {
        let k = GramMatrix::from_features(features.view());
        let l = GramMatrix::labels(labels);
        (hsic(&k, &l)?, hsic(&k, &k)?, hsic(&l, &l)?)
    };
    if kk <= 0.0 {
        return Err(Error::Undefined("feature kernel vanishes after centering".into()));
    }
    Ok((kl / (kk * ll).sqrt()).clamp(0.0, 1.0))
}

pub fn ntk_label_alignment(
    features: &EmbeddingMatrix,
    labels: &LabelVector,
    split: Split,
    label_source: LabelSource,
) -> Result<AlignmentScore> {
    Ok(AlignmentScore { value: alignment_value(features, labels)?, split, label_source })
}

/// Train minus test.
pub fn alignment_gap(train: &AlignmentScore, test: &AlignmentScore) -> Result<f64> {
    if train.label_source != test.label_source {
        return Err(Error::InvalidArgument("alignment gap across different label sources".into()));
    }
    Ok(train.value - test.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpuriousPanel {
    pub train_noisy: AlignmentScore,
    pub train_clean: AlignmentScore,
    pub test_clean: AlignmentScore,
}

/// Alignment of the train features with the noisy and the clean labels, and
/// of the test features with their (clean) labels.
pub fn spurious_alignment_panel(
    train_features: &EmbeddingMatrix,
    clean_labels: &LabelVector,
    noisy_labels: &LabelVector,
    test_features: &EmbeddingMatrix,
    test_labels: &LabelVector,
) -> Result<SpuriousPanel> {
    if clean_labels.len() != noisy_labels.len() {
        return Err(Error::Dimension("clean and noisy label vectors differ in length".into()));
    }
    Ok(SpuriousPanel {
        train_noisy: ntk_label_alignment(train_features, noisy_labels, Split::Train, LabelSource::Noisy)?,
        train_clean: ntk_label_alignment(train_features, clean_labels, Split::Train, LabelSource::Clean)?,
        test_clean: ntk_label_alignment(test_features, test_labels, Split::Test, LabelSource::Clean)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRate {
    /// `−ℓ̇(0) = tr(YKYᵀ)/n²` for a zero-initialized MSE readout.
    pub rate: f64,
    /// `tr(HKH · OOᵀH)`, the alignment numerator before the `(n−1)²` normalization.
    pub hsic_numerator: f64,
}

/// Initial loss decay rate of a linear readout trained by gradient flow from zero.
///
/// With `strict`, features must be mean-zero and classes equally sized; then
/// `rate · n² = hsic_numerator` exactly.
pub fn initial_decay_rate(features: &EmbeddingMatrix, labels: &LabelVector, strict: bool) -> Result<DecayRate> {
    let n = features.n_samples();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{n} feature rows but {} labels", labels.len())));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let phi = features.view();
    if strict {
        let counts = labels.histogram();
        if counts.iter().any(|&c| c != counts[0]) {
            return Err(Error::Assumption(format!("classes are not balanced: {counts:?}")));
        }
        let sum = phi.sum_axis(Axis(0));
        let scale = phi.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0f64, f64::max);
        if sum.dot(&sum).sqrt() > 1e-9 * n as f64 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Assumption("features are not mean-zero".into()));
        }
    }
    let o = one_hot(labels);
    let per_class = o.t().dot(&phi);
    let rate = frob2(&per_class) / (n * n) as f64;
    let yc = centered(o.view());
    let numerator = frob2(&centered(phi).t().dot(&yc));
    Ok(DecayRate { rate, hsic_numerator: numerator })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_oracle(k: &Array2<f64>, l: &Array2<f64>) -> f64 {
        let n = k.nrows();
        let h = Array2::from_shape_fn((n, n), |(i, j)| f64::from(u8::from(i == j)) - 1.0 / n as f64);
        let t = k.dot(&h).dot(l).dot(&h);
        t.diag().sum() / ((n - 1) * (n - 1)) as f64
    }

    #[test]
    fn hsic_matches_h_matrix_on_hand_instance() {
        let k = Array2::from_shape_vec((3, 3), vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]).unwrap();
        let l = Array2::from_shape_vec((3, 3), vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let got = hsic(&GramMatrix::new(k.clone()).unwrap(), &GramMatrix::new(l.clone()).unwrap()).unwrap();
        assert!((got - dense_oracle(&k, &l)).abs() < 1e-12);
    }

    #[test]
    fn constant_kernel_has_zero_hsic() {
        let k = GramMatrix::new(Array2::from_shape_fn((4, 4), |(i, j)| (i * j) as f64 + f64::from(u8::from(i == j))))
            .unwrap();
        let c = GramMatrix::new(Array2::from_elem((4, 4), 2.5)).unwrap();
        assert!(hsic(&k, &c).unwrap().abs() < 1e-14);
        assert!(hsic(&k, &GramMatrix::new(Array2::zeros((1, 1))).unwrap()).is_err());
    }

    #[test]
    fn rejects_indefinite_kernel() {
        let k = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(GramMatrix::new(k).is_err());
    }

    #[test]
    fn one_hot_features_align_perfectly() {
        let y = LabelVector::new(vec![0, 1, 2, 0, 1, 2], 3).unwrap();
        let phi = EmbeddingMatrix::new(one_hot(&y)).unwrap();
        assert!((alignment_value(&phi, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!((alignment_value_with(&phi, &y, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_label_is_undefined() {
        let y = LabelVector::new(vec![1, 1, 1], 2).unwrap();
        let phi = EmbeddingMatrix::new(Array2::from_elem((3, 2), 1.0)).unwrap();
        assert!(matches!(alignment_value(&phi, &y), Err(Error::Undefined(_))));
    }

    #[test]
    fn strict_decay_checks_assumptions() {
        let y = LabelVector::new(vec![0, 0, 1], 2).unwrap();
        let phi = EmbeddingMatrix::new(Array2::from_shape_vec((3, 1), vec![1.0, -2.0, 1.0]).unwrap()).unwrap();
        assert!(matches!(initial_decay_rate(&phi, &y, true), Err(Error::Assumption(_))));
        let y = LabelVector::new(vec![0, 1, 0, 1], 2).unwrap();
        let phi = EmbeddingMatrix::new(Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        assert!(matches!(initial_decay_rate(&phi, &y, true), Err(Error::Assumption(_))));
        let zero = EmbeddingMatrix::new(Array2::zeros((4, 3))).unwrap();
        assert_eq!(initial_decay_rate(&zero, &y, true).unwrap().rate, 0.0);
    }

    #[test]
    fn zero_noise_panel_matches() {
        let (x, y) = crate::tasks::gaussian_pair(&[1.0, 0.0], &[0.5, 3.0], 20, 1).unwrap();
        let p = spurious_alignment_panel(&x, &y, &y, &x, &y).unwrap();
        assert_eq!(p.train_noisy.value, p.train_clean.value);
        assert_eq!(alignment_gap(&p.train_clean, &p.test_clean).unwrap(), 0.0);
        assert!(alignment_gap(&p.train_noisy, &p.test_clean).is_err());
    }
}

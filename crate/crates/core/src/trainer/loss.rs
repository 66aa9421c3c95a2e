//! Losses over a batch of logits, with their gradient.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    /// Binary hinge on the margin `logit_1 − logit_0` with targets ±1.
    Hinge,
    /// Mean squared error against one-hot targets, averaged over all entries.
    Mse,
}

impl Loss {
    /// Mean loss and its gradient with respect to the logits.
    pub fn value_and_grad(self, logits: ArrayView2<f64>, labels: &[u32]) -> (f64, Array2<f64>) {
        let (b, c) = logits.dim();
        let mut grad = Array2::zeros((b, c));
        let mut total = 0.0;
        match self {
            Loss::CrossEntropy => {
                for (i, row) in logits.rows().into_iter().enumerate() {
                    let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                    let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
                    let lse = max + sum.ln();
                    let y = labels[i] as usize;
                    total += lse - row[y];
                    for j in 0..c {
                        grad[[i, j]] = (row[j] - lse).exp() / b as f64;
                    }
                    grad[[i, y]] -= 1.0 / b as f64;
                }
                (total / b as f64, grad)
            }
            Loss::Hinge => {
                assert_eq!(c, 2, "hinge loss is binary");
                for (i, row) in logits.rows().into_iter().enumerate() {
                    let y = if labels[i] == 1 { 1.0 } else { -1.0 };
                    let margin = y * (row[1] - row[0]);
                    if margin < 1.0 {
                        total += 1.0 - margin;
                        grad[[i, 1]] = -y / b as f64;
                        grad[[i, 0]] = y / b as f64;
                    }
                }
                (total / b as f64, grad)
            }
            Loss::Mse => {
                let scale = (b * c) as f64;
                for (i, row) in logits.rows().into_iter().enumerate() {
                    for j in 0..c {
                        let target = if labels[i] as usize == j { 1.0 } else { 0.0 };
                        let d = row[j] - target;
                        total += d * d;
                        grad[[i, j]] = 2.0 * d / scale;
                    }
                }
                (total / scale, grad)
            }
        }
    }

    pub fn value(self, logits: ArrayView2<f64>, labels: &[u32]) -> f64 {
        self.value_and_grad(logits, labels).0
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for j in 1..row.len() {
        if row[j] > row[best] {
            best = j;
        }
    }
    best
}

pub fn accuracy(logits: ArrayView2<f64>, labels: &[u32]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = logits.rows().into_iter().zip(labels).filter(|(row, &l)| argmax(row.view()) == l as usize).count();
    hits as f64 / labels.len() as f64
}

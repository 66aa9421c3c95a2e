//! Linear probes on frozen embeddings and transfer-task labels.

use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifolds::{EmbeddingMatrix, LabelVector};
use crate::rng::{domain, substream};
use crate::tasks::{perm_compose, perm_index, perm_inverse, permutation, Inputs};
use crate::trainer::AdamW;

/// Seed of the independent transfer split.
pub const TRANSFER_SPLIT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Per-entry init variance is `init_scale / N`.
    pub init_scale: f64,
    pub bias: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.98,
            weight_decay: 1.0,
            epochs: 200,
            init_scale: 1.0,
            bias: false,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("probe needs at least one epoch".into()));
        }
        if !(self.weight_decay >= 0.0) || !(self.learning_rate > 0.0) || !(self.init_scale >= 0.0) {
            return Err(Error::InvalidArgument("probe rates must be positive and weight decay nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// `C × N` readout.
    pub weights: Array2<f64>,
    pub bias: Option<Vec<f64>>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
}

fn logits(x: ArrayView2<'_, f64>, w: &Array2<f64>, b: Option<&[f64]>) -> Array2<f64> {
    let mut z = x.dot(&w.t());
    if let Some(b) = b {
        for mut row in z.rows_mut() {
            row.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
        }
    }
    z
}

fn accuracy(z: &Array2<f64>, y: &LabelVector) -> f64 {
    crate::trainer::accuracy(z.view(), y.as_slice())
}

/// Mean cross-entropy and its gradient with respect to the logits.
fn cross_entropy(z: &Array2<f64>, y: &LabelVector) -> (f64, Array2<f64>) {
    let n = z.nrows() as f64;
    let mut grad = z.clone();
    let mut loss = 0.0;
    for (i, mut row) in grad.rows_mut().into_iter().enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        let c = y.get(i);
        loss += s.ln() + m - z[[i, c]];
        row.mapv_inplace(|v| v / s / n);
        row[c] -= 1.0 / n;
    }
    (loss / n, grad)
}

/// Full-batch AdamW on softmax cross-entropy.
pub fn fit_probe(
    train: (&EmbeddingMatrix, &LabelVector),
    test: (&EmbeddingMatrix, &LabelVector),
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<ProbeResult> {
    cfg.validate()?;
    let (xtr, ytr) = train;
    let (xte, yte) = test;
    if xtr.n_samples() == 0 {
        return Err(Error::InvalidArgument("probe needs training samples".into()));
    }
    if ytr.len() != xtr.n_samples() || yte.len() != xte.n_samples() {
        return Err(Error::Dimension("features and labels differ in length".into()));
    }
    if xte.n_samples() > 0 && xte.dim() != xtr.dim() {
        return Err(Error::Dimension(format!("train dim {} vs test dim {}", xtr.dim(), xte.dim())));
    }
    if yte.classes() != ytr.classes() {
        return Err(Error::Dimension("train and test label spaces differ".into()));
    }
    let (c, n) = (ytr.classes(), xtr.dim());
    let std = (cfg.init_scale / n as f64).sqrt();
    let mut rng = substream(seed, domain::PROBE, 0);
    let w = Array2::from_shape_fn((c, n), |_| std * rng.sample::<f64, _>(StandardNormal));
    fit_probe_from(train, test, cfg, w)
}

/// As [`fit_probe`] from an explicit `C × N` initial readout.
pub fn fit_probe_from(
    train: (&EmbeddingMatrix, &LabelVector),
    test: (&EmbeddingMatrix, &LabelVector),
    cfg: &ProbeConfig,
    init: Array2<f64>,
) -> Result<ProbeResult> {
    cfg.validate()?;
    let (xtr, ytr) = train;
    let (xte, yte) = test;
    let (c, n) = (ytr.classes(), xtr.dim());
    if init.dim() != (c, n) {
        return Err(Error::Dimension(format!("initial readout is {:?}, expected ({c}, {n})", init.dim())));
    }
    let mut w = init.as_standard_layout().into_owned();
    let mut b = cfg.bias.then(|| vec![0.0; c]);
    let mut opt_w = AdamW::new(c * n, cfg.beta1, cfg.beta2, cfg.weight_decay);
    let mut opt_b = AdamW::new(c, cfg.beta1, cfg.beta2, 0.0);
    let x = xtr.view();
    let mut loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        let z = logits(x, &w, b.as_deref());
        let (l, dz) = cross_entropy(&z, ytr);
        if !l.is_finite() {
            return Err(Error::Divergence { epoch, loss: l });
        }
        loss = l;
        let gw = dz.t().dot(&x);
        opt_w.step(
            w.as_slice_mut().expect("standard layout"),
            gw.as_slice().expect("standard layout"),
            cfg.learning_rate,
        );
        if let Some(b) = b.as_mut() {
            let gb = dz.sum_axis(Axis(0));
            opt_b.step(b, gb.as_slice().expect("contiguous"), cfg.learning_rate);
        }
    }
    let ztr = logits(x, &w, b.as_deref());
    let (final_loss, _) = cross_entropy(&ztr, ytr);
    if !final_loss.is_finite() {
        return Err(Error::Divergence { epoch: cfg.epochs, loss });
    }
    let test_accuracy = if xte.n_samples() == 0 { 0.0 } else { accuracy(&logits(xte.view(), &w, b.as_deref()), yte) };
    Ok(ProbeResult { train_accuracy: accuracy(&ztr, ytr), test_accuracy, final_loss, weights: w, bias: b })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeGaps {
    pub model_gen_gap: f64,
    pub probe_gen_gap: f64,
    pub probe_minus_model_test: f64,
}

pub fn probe_gaps(probe: &ProbeResult, model_train_acc: f64, model_test_acc: f64) -> ProbeGaps {
    ProbeGaps {
        model_gen_gap: model_train_acc - model_test_acc,
        probe_gen_gap: probe.train_accuracy - probe.test_accuracy,
        probe_minus_model_test: probe.test_accuracy - model_test_acc,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferTask {
    /// `(a − b) mod p` on modular-addition pairs.
    ModaddDiff,
    /// Index of `σ∘τ⁻¹` on permutation pairs.
    PermcompInverse,
}

impl FromStr for TransferTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modadd_diff" => Ok(TransferTask::ModaddDiff),
            "permcomp_inverse" => Ok(TransferTask::PermcompInverse),
            other => Err(Error::InvalidArgument(format!("unknown transfer task '{other}'"))),
        }
    }
}

/// Labels of the transfer task on the source task's inputs.
pub fn transfer_labels(task: TransferTask, inputs: &Inputs) -> Result<LabelVector> {
    let Inputs::Pairs { pairs, vocab } = inputs else {
        return Err(Error::InvalidArgument("transfer tasks need token-pair inputs".into()));
    };
    let vocab = *vocab;
    match task {
        TransferTask::ModaddDiff => {
            let labels = pairs.iter().map(|&(a, b)| ((a as usize + vocab - b as usize) % vocab) as u32).collect();
            LabelVector::new(labels, vocab)
        }
        TransferTask::PermcompInverse => {
            let n = (1..=8usize)
                .find(|&k| (1..=k).product::<usize>() == vocab)
                .ok_or_else(|| Error::InvalidArgument(format!("vocabulary {vocab} is not a factorial")))?;
            let labels = pairs
                .iter()
                .map(|&(s, t)| {
                    let sigma = permutation(n, s as usize);
                    let tau = permutation(n, t as usize);
                    perm_index(&perm_compose(&sigma, &perm_inverse(&tau))) as u32
                })
                .collect();
            LabelVector::new(labels, vocab)
        }
    }
}

/// Independent 60/40 split of `n` samples; both halves sorted.
pub fn transfer_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, domain::DATA_SPLIT, 1));
    let k = (0.6 * n as f64).round() as usize;
    let mut train = idx[..k].to_vec();
    let mut test = idx[k..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Probe the frozen encoder on a transfer task.
///
/// `embeddings` has one row per entry of `inputs`.
pub fn transfer_probe(
    embeddings: &EmbeddingMatrix,
    inputs: &Inputs,
    task: TransferTask,
    cfg: &ProbeConfig,
    split_seed: u64,
    seed: u64,
) -> Result<ProbeResult> {
    let labels = transfer_labels(task, inputs)?;
    if embeddings.n_samples() != labels.len() {
        return Err(Error::Dimension(format!("{} embeddings for {} inputs", embeddings.n_samples(), labels.len())));
    }
    let (tr, te) = transfer_split(labels.len(), split_seed);
    let xtr = EmbeddingMatrix::new(embeddings.select_rows(&tr))?;
    let xte = EmbeddingMatrix::new(embeddings.select_rows(&te))?;
    fit_probe((&xtr, &labels.select(&tr)), (&xte, &labels.select(&te)), cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfer_label_arithmetic() {
        let inputs = Inputs::Pairs { pairs: vec![(3, 1), (4, 0), (2, 1)], vocab: 5 };
        let y = transfer_labels(TransferTask::ModaddDiff, &inputs).unwrap();
        assert_eq!(y.as_slice(), &[2, 4, 1]);
        let id = perm_index(&[0, 1, 2]) as u32;
        let inputs = Inputs::Pairs { pairs: vec![(id, id), (4, 4), (2, 5)], vocab: 6 };
        let y = transfer_labels(TransferTask::PermcompInverse, &inputs).unwrap();
        assert_eq!(y.get(0), id as usize);
        assert_eq!(y.get(1), id as usize);
        assert_ne!(y.get(2), id as usize);
        assert!("modadd_sum".parse::<TransferTask>().is_err());
    }

    #[test]
    fn split_is_sixty_forty_and_disjoint() {
        let (tr, te) = transfer_split(100, TRANSFER_SPLIT_SEED);
        assert_eq!((tr.len(), te.len()), (60, 40));
        assert!(tr.iter().all(|i| !te.contains(i)));
    }

    #[test]
    fn gaps_arithmetic() {
        let probe = ProbeResult {
            weights: Array2::zeros((1, 1)),
            bias: None,
            train_accuracy: 0.6,
            test_accuracy: 0.55,
            final_loss: 0.0,
        };
        let g = probe_gaps(&probe, 1.0, 0.2);
        assert!((g.model_gen_gap - 0.8).abs() < 1e-12);
        assert!((g.probe_gen_gap - 0.05).abs() < 1e-12);
        assert!((g.probe_minus_model_test - 0.35).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_matches_differences() {
        let z = Array2::from_shape_vec((2, 3), vec![0.1, -0.3, 0.7, 1.2, 0.0, -0.5]).unwrap();
        let y = LabelVector::new(vec![2, 0], 3).unwrap();
        let (_, g) = cross_entropy(&z, &y);
        for i in 0..2 {
            for j in 0..3 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[[i, j]] += 1e-6;
                zm[[i, j]] -= 1e-6;
                let fd = (cross_entropy(&zp, &y).0 - cross_entropy(&zm, &y).0) / 2e-6;
                assert!((fd - g[[i, j]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn exploding_rate_reports_divergence() {
        let x = EmbeddingMatrix::new(Array2::from_elem((4, 2), 1e300)).unwrap();
        let y = LabelVector::new(vec![0, 1, 0, 1], 2).unwrap();
        let cfg = ProbeConfig { learning_rate: 1e10, weight_decay: 0.0, ..ProbeConfig::default() };
        assert!(matches!(fit_probe((&x, &y), (&x, &y), &cfg, 0), Err(Error::Divergence { .. })));
    }
}

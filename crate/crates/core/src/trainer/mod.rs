//! Training of the small architectures with checkpointed embeddings and readouts.

pub mod config;
mod gradcheck;
pub mod loss;
pub mod models;
pub mod optim;
pub mod params;

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::archive::{checkpoint_file_name, CheckpointPair, CurvePoint, RunArchive, Stored};
use crate::checkpoint::{write_checkpoint, CheckpointRecord, Split};
use crate::error::{Error, Result};
use crate::manifolds::LabelVector;
use crate::rng::{domain, substream};
use crate::tasks::{inject_label_noise, Dataset, Inputs};

pub use config::{
    Architecture, ModelSpec, OptimizerKind, OptimizerSpec, RunSpec, ScaleSpec, TaskKind, TaskSpec, TrainConfig,
};
pub use gradcheck::finite_difference_gradcheck;
pub use loss::{accuracy, argmax, Loss};
pub use models::{build_model, encode, Forward, Network};
pub use optim::{AdamW, Schedule};

/// Largest tolerated relative difference between model logits and logits
/// rebuilt from the archived 32-bit readout and embeddings.
pub const CLOSURE_TOLERANCE: f64 = 1e-3;

/// Log-uniform epoch grid `round(exp(linspace(0, ln E, count)))`, deduplicated,
/// always ending at `E`.
pub fn checkpoint_epochs(epochs: usize, count: usize) -> Vec<u64> {
    let last = (epochs as f64).ln();
    let mut grid: Vec<u64> = (0..count)
        .map(|i| {
            let t = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            (t * last).exp().round() as u64
        })
        .collect();
    grid.push(epochs as u64);
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Where checkpoints go while training.
#[derive(Debug, Clone)]
pub enum ArchiveTarget {
    Memory,
    /// Stream checkpoints into this run directory.
    Directory(PathBuf),
}

/// A network with its trained parameters.
pub struct TrainedModel {
    pub net: Box<dyn Network>,
    pub params: Vec<f64>,
}

impl TrainedModel {
    /// Decomposition-point embeddings `[φ; 1]`.
    pub fn encode(&self, x: &Inputs) -> Array2<f64> {
        encode(self.net.as_ref(), &self.params, x)
    }
}

pub struct TrainOutput {
    pub archive: RunArchive,
    pub model: TrainedModel,
    pub dataset: Dataset,
}

struct Evaluation {
    loss: f64,
    acc: f64,
    loss_clean: Option<f64>,
    acc_clean: Option<f64>,
    forward: Forward,
}

fn evaluate(
    net: &dyn Network,
    params: &[f64],
    x: &Inputs,
    labels: &[u32],
    clean: Option<&[u32]>,
    loss: Loss,
) -> Evaluation {
    let forward = net.forward(params, x);
    let l = loss.value(forward.logits.view(), labels);
    let a = accuracy(forward.logits.view(), labels);
    let (lc, ac) = match clean {
        Some(c) => (Some(loss.value(forward.logits.view(), c)), Some(accuracy(forward.logits.view(), c))),
        None => (None, None),
    };
    Evaluation { loss: l, acc: a, loss_clean: lc, acc_clean: ac, forward }
}

fn make_record(
    epoch: u64,
    split: Split,
    ev: &Evaluation,
    labels: LabelVector,
    readout: &Array2<f64>,
) -> Result<CheckpointRecord> {
    let emb = models::with_constant(&ev.forward.features).mapv(|v| v as f32);
    let w = readout.mapv(|v| v as f32);
    // closure: archived W and φ must reproduce the model's logits
    let rebuilt = emb.mapv(f64::from).dot(&w.mapv(f64::from).t());
    let scale = ev.forward.logits.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let err = rebuilt.iter().zip(ev.forward.logits.iter()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / scale;
    if err > CLOSURE_TOLERANCE {
        return Err(Error::Assumption(format!(
            "stored readout does not reproduce logits at epoch {epoch} (rel {err:.2e})"
        )));
    }
    let mut metrics = BTreeMap::from([
        ("loss".to_string(), ev.loss),
        ("accuracy".to_string(), ev.acc),
        ("closure_error".to_string(), err),
    ]);
    if let (Some(l), Some(a)) = (ev.loss_clean, ev.acc_clean) {
        metrics.insert("loss_clean".into(), l);
        metrics.insert("accuracy_clean".into(), a);
    }
    CheckpointRecord::new(epoch, split, emb, labels, Some(w), metrics)
}

/// Train per `cfg`, checkpointing on the log-uniform grid.
pub fn train(cfg: &TrainConfig, target: ArchiveTarget) -> Result<TrainOutput> {
    train_with_progress(cfg, target, |_| {})
}

pub fn train_with_progress(
    cfg: &TrainConfig,
    target: ArchiveTarget,
    mut progress: impl FnMut(&CurvePoint),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let seed = cfg.run.seed;
    let ds = cfg.task.build(seed)?;
    let noise =
        if cfg.run.label_noise > 0.0 { Some(inject_label_noise(&ds, cfg.run.label_noise, seed)?) } else { None };
    let trained_labels: &LabelVector = noise.as_ref().map_or(&ds.labels, |n| &n.noisy_labels);

    let net = build_model(&cfg.model, &cfg.scale, &ds)?;
    let mut params = net.init(seed);
    let o = &cfg.optimizer;
    let mut opt = match o.kind {
        OptimizerKind::Adamw => {
            optim::Optimizer::AdamW(optim::AdamW::new(params.len(), o.beta1, o.beta2, o.weight_decay))
        }
        OptimizerKind::Sgd => optim::Optimizer::Sgd(optim::Sgd { weight_decay: o.weight_decay }),
    };
    let lr = cfg.effective_lr();
    let n_train = ds.train.len();
    let steps_per_epoch = n_train.div_ceil(o.batch_size);
    let total_steps = steps_per_epoch * cfg.run.epochs;

    let train_x = ds.inputs.select(&ds.train);
    let test_x = ds.inputs.select(&ds.test);
    let train_fit: Vec<u32> = ds.train.iter().map(|&i| trained_labels.as_slice()[i]).collect();
    let train_clean = ds.train_labels();
    let test_clean = ds.test_labels();

    let grid = checkpoint_epochs(cfg.run.epochs, cfg.run.checkpoints);
    let ckdir = match &target {
        ArchiveTarget::Directory(dir) => {
            let d = dir.join("checkpoints");
            fs::create_dir_all(&d)?;
            Some(d)
        }
        ArchiveTarget::Memory => None,
    };

    let mut curves = Vec::with_capacity(cfg.run.epochs);
    let mut checkpoints = Vec::with_capacity(grid.len());
    let mut next_ck = 0;
    let mut step = 0;
    let mut order: Vec<usize> = (0..n_train).collect();
    for epoch in 1..=cfg.run.epochs {
        order.sort_unstable();
        order.shuffle(&mut substream(seed, domain::SHUFFLE, epoch as u64));
        for chunk in order.chunks(o.batch_size) {
            let idx: Vec<usize> = chunk.iter().map(|&k| ds.train[k]).collect();
            let x = ds.inputs.select(&idx);
            let y: Vec<u32> = chunk.iter().map(|&k| train_fit[k]).collect();
            let (loss, grad) = net.loss_and_grad(&params, &x, &y, o.loss);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, loss });
            }
            opt.step(&mut params, &grad, lr * o.scheduler.factor(step, total_steps));
            step += 1;
        }

        let clean = noise.as_ref().map(|_| train_clean.as_slice());
        let tr = evaluate(net.as_ref(), &params, &train_x, &train_fit, clean, o.loss);
        let te = evaluate(net.as_ref(), &params, &test_x, test_clean.as_slice(), None, o.loss);
        if !tr.loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: tr.loss });
        }
        let point = CurvePoint {
            epoch: epoch as u64,
            train_loss: tr.loss,
            train_acc: tr.acc,
            test_loss: te.loss,
            test_acc: te.acc,
            train_loss_clean: tr.loss_clean,
            train_acc_clean: tr.acc_clean,
        };
        progress(&point);
        curves.push(point);

        if next_ck < grid.len() && grid[next_ck] == epoch as u64 {
            next_ck += 1;
            let readout = net.readout(&params);
            let rec_train = make_record(epoch as u64, Split::Train, &tr, train_clean.clone(), &readout)?;
            let rec_test = make_record(epoch as u64, Split::Test, &te, test_clean.clone(), &readout)?;
            let store = |rec: CheckpointRecord, split: Split| -> Result<Stored> {
                Ok(match &ckdir {
                    Some(d) => {
                        let path = d.join(checkpoint_file_name(epoch as u64, split));
                        write_checkpoint(&rec, &path)?;
                        Stored::File(path)
                    }
                    None => Stored::Memory(Arc::new(rec)),
                })
            };
            checkpoints.push(CheckpointPair {
                epoch: epoch as u64,
                train: store(rec_train, Split::Train)?,
                test: store(rec_test, Split::Test)?,
            });
        }
    }

    let archive = RunArchive {
        run_id: cfg.run_id(),
        config_digest: cfg.digest(),
        config: serde_json::to_value(cfg)?,
        checkpoints,
        curves,
        noise,
        root: match &target {
            ArchiveTarget::Directory(d) => Some(d.clone()),
            ArchiveTarget::Memory => None,
        },
    };
    if archive.root.is_some() {
        archive.write_metadata()?;
    }
    Ok(TrainOutput { archive, model: TrainedModel { net, params }, dataset: ds })
}

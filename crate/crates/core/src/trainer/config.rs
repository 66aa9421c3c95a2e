//! Training configuration and the named recipes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::loss::Loss;
use super::optim::Schedule;
use crate::error::{Error, Result};
use crate::tasks::{self, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Modadd {
        p: usize,
        train_fraction: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_train: Option<usize>,
    },
    Permcomp {
        n: usize,
        train_fraction: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_train: Option<usize>,
    },
    SparseParity {
        n: usize,
        k: usize,
        n_train: usize,
        n_test: usize,
    },
}

impl TaskSpec {
    pub fn build(&self, seed: u64) -> Result<Dataset> {
        match *self {
            TaskSpec::Modadd { p, n_train: Some(k), .. } => tasks::modadd_dataset_with_count(p, k, seed),
            TaskSpec::Modadd { p, train_fraction, n_train: None } => tasks::modadd_dataset(p, train_fraction, seed),
            TaskSpec::Permcomp { n, n_train: Some(k), .. } => tasks::permcomp_dataset_with_count(n, k, seed),
            TaskSpec::Permcomp { n, train_fraction, n_train: None } => tasks::permcomp_dataset(n, train_fraction, seed),
            TaskSpec::SparseParity { n, k, n_train, n_test } => {
                tasks::sparse_parity_dataset(n, k, n_train, n_test, seed)
            }
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::Modadd { .. } => TaskKind::Modadd,
            TaskSpec::Permcomp { .. } => TaskKind::Permcomp,
            TaskSpec::SparseParity { .. } => TaskKind::SparseParity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Modadd,
    Permcomp,
    SparseParity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    MlpModadd,
    MlpPermcomp,
    MlpParity,
    TransformerOneblock,
    Mlp3layerScaled,
}

/// Architecture plus optional width overrides; unset widths take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_emb: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_heads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_mlp: Option<usize>,
    /// Token-embedding init std for the MLP architectures; unset is `1/√d_emb`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_std: Option<f64>,
}

impl ModelSpec {
    pub fn new(architecture: Architecture) -> Self {
        Self { architecture, d_emb: None, d_hidden: None, n_heads: None, d_mlp: None, embedding_std: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adamw,
    Sgd,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.98
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    /// Configured rate; the applied rate is `lr / beta`.
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub loss: Loss,
    pub scheduler: Schedule,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    /// Multiplier on the final layer at initialization.
    #[serde(default = "one")]
    pub beta: f64,
    /// Multiplier on every weight matrix at initialization (`mlp_3layer_scaled`).
    #[serde(default = "one")]
    pub alpha: f64,
}

impl Default for ScaleSpec {
    fn default() -> Self {
        Self { beta: 1.0, alpha: 1.0 }
    }
}

impl ScaleSpec {
    pub fn effective_lr(&self, configured: f64) -> f64 {
        configured / self.beta
    }
}

fn default_checkpoints() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task: TaskSpec,
    pub model: ModelSpec,
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub scale: ScaleSpec,
    pub run: RunSpec,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let arch = self.model.architecture;
        let kind = self.task.kind();
        let paired = matches!(
            (arch, kind),
            (Architecture::MlpModadd, TaskKind::Modadd)
                | (Architecture::MlpPermcomp, TaskKind::Permcomp)
                | (Architecture::MlpParity, TaskKind::SparseParity)
                | (Architecture::Mlp3layerScaled, TaskKind::SparseParity)
                | (Architecture::TransformerOneblock, TaskKind::Modadd | TaskKind::Permcomp)
        );
        if !paired {
            return Err(Error::InvalidArgument(format!("architecture {arch:?} does not support task {kind:?}")));
        }
        let o = &self.optimizer;
        if o.kind == OptimizerKind::Sgd && !(arch == Architecture::MlpParity && o.loss == Loss::Hinge) {
            return Err(Error::InvalidArgument("sgd is only paired with hinge loss on mlp_parity".into()));
        }
        if o.loss == Loss::Hinge && kind != TaskKind::SparseParity {
            return Err(Error::InvalidArgument("hinge loss needs a binary task".into()));
        }
        if !(o.lr > 0.0) || o.weight_decay < 0.0 || o.batch_size == 0 {
            return Err(Error::InvalidArgument("need lr > 0, weight_decay >= 0, batch_size >= 1".into()));
        }
        if !(self.scale.beta > 0.0 && self.scale.alpha > 0.0) {
            return Err(Error::InvalidArgument("beta and alpha must be positive".into()));
        }
        if let Some(s) = self.model.embedding_std {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument("embedding_std must be positive".into()));
            }
            if !matches!(arch, Architecture::MlpModadd | Architecture::MlpPermcomp) {
                return Err(Error::InvalidArgument("embedding_std applies to mlp_modadd and mlp_permcomp only".into()));
            }
        }
        if self.scale.alpha != 1.0 && arch != Architecture::Mlp3layerScaled {
            return Err(Error::InvalidArgument("alpha applies to mlp_3layer_scaled only".into()));
        }
        if self.run.epochs == 0 || self.run.checkpoints == 0 {
            return Err(Error::InvalidArgument("epochs and checkpoints must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.run.label_noise) {
            return Err(Error::InvalidArgument("label_noise must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Configured rate divided by the output scale.
    pub fn effective_lr(&self) -> f64 {
        self.scale.effective_lr(self.optimizer.lr)
    }

    /// Canonical JSON (sorted keys, no whitespace) used for hashing.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn run_id(&self) -> String {
        self.run.run_id.clone().unwrap_or_else(|| self.digest()[..12].to_string())
    }

    /// Published recipes, by name. See [`PRESETS`].
    pub fn preset(name: &str) -> Result<Self> {
        let adamw = |lr: f64, wd: f64, batch: usize, scheduler: Schedule| OptimizerSpec {
            kind: OptimizerKind::Adamw,
            lr,
            beta1: 0.9,
            beta2: 0.98,
            weight_decay: wd,
            batch_size: batch,
            loss: Loss::CrossEntropy,
            scheduler,
        };
        let sgd_hinge = OptimizerSpec {
            kind: OptimizerKind::Sgd,
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.98,
            weight_decay: 0.01,
            batch_size: 50,
            loss: Loss::Hinge,
            scheduler: Schedule::Flat,
        };
        let run = |epochs: usize| RunSpec { epochs, seed: 0, checkpoints: 200, label_noise: 0.0, run_id: None };
        let scale = |beta: f64| ScaleSpec { beta, alpha: 1.0 };
        let modadd = |f: f64| TaskSpec::Modadd { p: 113, train_fraction: f, n_train: None };
        let permcomp = |f: f64, k: Option<usize>| TaskSpec::Permcomp { n: 5, train_fraction: f, n_train: k };
        let parity = |k: usize| TaskSpec::SparseParity { n: 40, k: 3, n_train: k, n_test: 1000 };
        use Architecture::*;
        let cfg = |task, arch, optimizer, scale, run| TrainConfig {
            task,
            model: ModelSpec::new(arch),
            optimizer,
            scale,
            run,
        };
        Ok(match name {
            "modadd_mlp_grok" => {
                cfg(modadd(0.5), MlpModadd, adamw(5e-4, 1.0, 200, Schedule::Cosine), scale(1.0), run(2000))
            }
            "modadd_mlp_nogrok" => {
                cfg(modadd(0.6), MlpModadd, adamw(5e-5, 1.0, 200, Schedule::Cosine), scale(0.005), run(1000))
            }
            "modadd_transformer_grok" => {
                cfg(modadd(0.6), TransformerOneblock, adamw(1e-3, 1.0, 200, Schedule::Cosine), scale(2.0), run(500))
            }
            "modadd_transformer_nogrok" => {
                cfg(modadd(0.6), TransformerOneblock, adamw(1e-3, 1.0, 200, Schedule::Cosine), scale(0.3), run(500))
            }
            "permcomp_mlp_grok" => cfg(
                permcomp(0.42, Some(6000)),
                MlpPermcomp,
                adamw(1e-3, 1.0, 2000, Schedule::Cosine),
                scale(1.0),
                run(10_000),
            ),
            "permcomp_mlp_nogrok" => {
                cfg(permcomp(0.75, None), MlpPermcomp, adamw(1e-5, 1.0, 2000, Schedule::Cosine), scale(0.01), run(1000))
            }
            "permcomp_transformer_grok" => cfg(
                permcomp(0.4, None),
                TransformerOneblock,
                adamw(1e-3, 1.0, 200, Schedule::Flat),
                scale(1.0),
                run(400),
            ),
            "permcomp_transformer_nogrok" => cfg(
                permcomp(0.75, None),
                TransformerOneblock,
                adamw(1e-3, 0.01, 200, Schedule::Flat),
                scale(0.1),
                run(1000),
            ),
            "parity_mlp_grok" => cfg(parity(1200), MlpParity, sgd_hinge.clone(), scale(1.0), run(2000)),
            "parity_mlp_nogrok" => cfg(parity(5000), MlpParity, sgd_hinge, scale(0.1), run(2000)),
            "parity_mlp3_scaled" => {
                let mut o = adamw(1e-3, 2e-4, 200, Schedule::Flat);
                o.beta2 = 0.999;
                o.loss = Loss::Mse;
                cfg(parity(1000), Mlp3layerScaled, o, ScaleSpec { beta: 1.0, alpha: 6.0 }, run(2000))
            }
            other => return Err(Error::InvalidArgument(format!("unknown preset {other:?}; known: {PRESETS:?}"))),
        })
    }

    /// Same recipe on a smaller modulus (modular-addition presets only).
    pub fn with_modulus(mut self, p: usize) -> Self {
        if let TaskSpec::Modadd { p: ref mut q, .. } = self.task {
            *q = p;
        }
        self
    }
}

pub const PRESETS: &[&str] = &[
    "modadd_mlp_grok",
    "modadd_mlp_nogrok",
    "modadd_transformer_grok",
    "modadd_transformer_nogrok",
    "permcomp_mlp_grok",
    "permcomp_mlp_nogrok",
    "permcomp_transformer_grok",
    "permcomp_transformer_nogrok",
    "parity_mlp_grok",
    "parity_mlp_nogrok",
    "parity_mlp3_scaled",
];

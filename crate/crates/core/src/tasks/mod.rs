//! Dataset generators for the algorithmic tasks and the analytic toys.
//!
//! Every generator is a pure function of its parameters and seed.

mod algorithmic;
mod noise;
mod synthetic;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::manifolds::LabelVector;

pub use algorithmic::{
    modadd_dataset, modadd_dataset_with_count, parity_support, perm_compose, perm_index, perm_inverse,
    permcomp_dataset, permcomp_dataset_with_count, permutation, sparse_parity_dataset,
};
pub use noise::{inject_label_noise, NoiseInjection};
pub use synthetic::{
    analytic_projection_accuracy, gaussian_manifold_suite, gaussian_manifolds, gaussian_pair, two_ellipsoid,
    two_ellipsoid_labeled, GaussianManifoldParams, SuiteMember, SweepParameter,
};

/// Encoded model inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    /// Token pairs over a vocabulary of `vocab` symbols.
    Pairs { pairs: Vec<(u32, u32)>, vocab: usize },
    /// Dense real-valued rows (e.g. ±1 bit vectors).
    Dense(Array2<f64>),
}

impl Inputs {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Pairs { pairs, .. } => pairs.len(),
            Inputs::Dense(x) => x.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Inputs {
        match self {
            Inputs::Pairs { pairs, vocab } => {
                Inputs::Pairs { pairs: idx.iter().map(|&i| pairs[i]).collect(), vocab: *vocab }
            }
            Inputs::Dense(x) => Inputs::Dense(x.select(ndarray::Axis(0), idx)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub task: String,
    pub params: Vec<(String, f64)>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Inputs,
    pub labels: LabelVector,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn classes(&self) -> usize {
        self.labels.classes()
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn train_labels(&self) -> LabelVector {
        self.labels.select(&self.train)
    }

    pub fn test_labels(&self) -> LabelVector {
        self.labels.select(&self.test)
    }
}

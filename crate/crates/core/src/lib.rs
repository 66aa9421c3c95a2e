//! Representation-readout decomposition of neural-network learning dynamics.
//!
//! A trained classifier is split into an encoder `φ` and its final linear
//! readout `W`. The modules here train small models on algorithmic tasks,
//! archive `φ` per checkpoint, and measure how the label-conditioned
//! manifolds and the readout evolve.

pub mod archive;
pub mod checkpoint;
pub mod dynamics;
pub mod error;
pub mod glue;
pub mod kernels;
pub mod manifolds;
pub mod probes;
pub mod rng;
pub mod tasks;
pub mod trainer;

pub use archive::{CurvePoint, RunArchive};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointRecord, Split};
pub use error::{Error, Result};
pub use manifolds::{group_by_label, subsample_manifolds, EmbeddingMatrix, LabelVector, ManifoldSet};

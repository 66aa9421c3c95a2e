//! Label-conditioned representation manifolds.
//!
//! Embeddings live in one shared row-major matrix; a [`ManifoldSet`] only
//! holds per-class row indices into it, so subsampling and regrouping never
//! copy point data.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// Dense `n x N` matrix of encoder outputs (one row per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, dim) = data.dim();
        if n == 0 || dim == 0 {
            return Err(Error::Dimension(format!("embedding matrix must be non-empty, got {n}x{dim}")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite embedding entry at row {} col {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((n, dim), flat).map_err(|e| Error::Dimension(e.to_string()))?;
        Self::new(data)
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Rows selected by `idx`, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Array2<f64> {
        self.data.select(ndarray::Axis(0), idx)
    }
}

/// Integer class labels in `[0, C)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<u32>,
    classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<u32>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= classes) {
            return Err(Error::InvalidArgument(format!("label {l} at index {i} out of range for {classes} classes")));
        }
        Ok(Self { labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    /// Number of distinct labels that actually occur.
    pub fn distinct(&self) -> usize {
        self.histogram().iter().filter(|&&c| c > 0).count()
    }

    pub fn select(&self, idx: &[usize]) -> LabelVector {
        LabelVector { labels: idx.iter().map(|&i| self.labels[i]).collect(), classes: self.classes }
    }
}

/// Per-class index lists into a shared embedding matrix.
#[derive(Debug, Clone)]
pub struct ManifoldSet {
    embeddings: Arc<EmbeddingMatrix>,
    per_class: Vec<Vec<usize>>,
}

impl ManifoldSet {
    pub fn from_parts(embeddings: Arc<EmbeddingMatrix>, per_class: Vec<Vec<usize>>) -> Result<Self> {
        let n = embeddings.n_samples();
        if per_class.len() < 2 {
            return Err(Error::InvalidArgument("a manifold set needs at least 2 classes".into()));
        }
        if per_class.iter().flatten().any(|&i| i >= n) {
            return Err(Error::Dimension(format!("row index out of range for {n} rows")));
        }
        Ok(Self { embeddings, per_class })
    }

    pub fn class_count(&self) -> usize {
        self.per_class.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn shared_embeddings(&self) -> Arc<EmbeddingMatrix> {
        Arc::clone(&self.embeddings)
    }

    pub fn indices(&self, class: usize) -> &[usize] {
        &self.per_class[class]
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.per_class.iter().map(Vec::len).collect()
    }

    pub fn point(&self, class: usize, k: usize) -> ArrayView1<'_, f64> {
        self.embeddings.row(self.per_class[class][k])
    }

    /// Points of one class as a `(m, N)` matrix.
    pub fn class_points(&self, class: usize) -> Array2<f64> {
        self.embeddings.select_rows(&self.per_class[class])
    }

    pub fn empty_classes(&self) -> Vec<usize> {
        (0..self.class_count()).filter(|&c| self.per_class[c].is_empty()).collect()
    }

    /// Same manifolds with every point replaced by `f(point)` (e.g. a rotation).
    pub fn map_points(&self, f: impl Fn(ArrayView2<'_, f64>) -> Array2<f64>) -> Result<Self> {
        let mapped = EmbeddingMatrix::new(f(self.embeddings.view()))?;
        Self::from_parts(Arc::new(mapped), self.per_class.clone())
    }
}

/// Group embedding rows by their label.
pub fn group_by_label(embeddings: EmbeddingMatrix, labels: &LabelVector) -> Result<ManifoldSet> {
    group_by_label_shared(Arc::new(embeddings), labels)
}

pub fn group_by_label_shared(embeddings: Arc<EmbeddingMatrix>, labels: &LabelVector) -> Result<ManifoldSet> {
    if labels.len() != embeddings.n_samples() {
        return Err(Error::Dimension(format!("{} labels for {} embedding rows", labels.len(), embeddings.n_samples())));
    }
    let mut per_class = vec![Vec::new(); labels.classes()];
    for (i, &l) in labels.as_slice().iter().enumerate() {
        per_class[l as usize].push(i);
    }
    ManifoldSet::from_parts(embeddings, per_class)
}

/// Keep at most `m` points per class, drawn without replacement.
///
/// Each class draws from its own stream, so the result depends only on
/// `(seed, class, class size)`.
pub fn subsample_manifolds(ms: &ManifoldSet, m: usize, seed: u64) -> Result<ManifoldSet> {
    if m == 0 {
        return Err(Error::InvalidArgument("per-class subsample size must be >= 1".into()));
    }
    let per_class = ms
        .per_class
        .iter()
        .enumerate()
        .map(|(c, idx)| {
            if idx.len() <= m {
                return idx.clone();
            }
            let mut rng = substream(seed, domain::SUBSAMPLE, c as u64);
            let mut picked: Vec<usize> =
                rand::seq::index::sample(&mut rng, idx.len(), m).into_iter().map(|k| idx[k]).collect();
            picked.sort_unstable();
            picked
        })
        .collect();
    ManifoldSet::from_parts(ms.shared_embeddings(), per_class)
}

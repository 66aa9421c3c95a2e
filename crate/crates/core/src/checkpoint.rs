//! RRDC checkpoint files.
//!
//! Layout (little-endian): magic `RRDC`, u32 version, u64 epoch, u8 split,
//! u32 N, u32 n, u32 C, u8 has_readout, n×N f32 embeddings (row-major),
//! n×u32 labels, optional C×N f32 readout, u32 metric count, then per metric
//! a u32 byte length, UTF-8 name and f64 value.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifolds::{EmbeddingMatrix, LabelVector};

pub const MAGIC: &[u8; 4] = b"RRDC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Embeddings, labels, readout and scalar metrics of one split at one epoch.
///
/// Float payloads are held at the archived 32-bit precision so that a
/// write/read cycle is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub epoch: u64,
    pub split: Split,
    pub embeddings: Array2<f32>,
    pub labels: LabelVector,
    pub readout: Option<Array2<f32>>,
    pub metrics: BTreeMap<String, f64>,
}

impl CheckpointRecord {
    pub fn new(
        epoch: u64,
        split: Split,
        embeddings: Array2<f32>,
        labels: LabelVector,
        readout: Option<Array2<f32>>,
        metrics: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let (n, dim) = embeddings.dim();
        if labels.len() != n {
            return Err(Error::Dimension(format!("{} labels for {n} embedding rows", labels.len())));
        }
        if let Some(w) = &readout {
            if w.dim() != (labels.classes(), dim) {
                return Err(Error::Dimension(format!(
                    "readout is {:?}, expected ({}, {dim})",
                    w.dim(),
                    labels.classes()
                )));
            }
        }
        Ok(Self { epoch, split, embeddings, labels, readout, metrics })
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.embeddings.nrows()
    }

    /// Embeddings widened to 64-bit for analysis.
    pub fn embedding_matrix(&self) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(self.embeddings.mapv(f64::from))
    }

    pub fn readout_f64(&self) -> Option<Array2<f64>> {
        self.readout.as_ref().map(|w| w.mapv(f64::from))
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, dim) = self.embeddings.dim();
        let mut out = Vec::with_capacity(40 + 4 * n * (dim + 1));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.push(match self.split {
            Split::Train => 0,
            Split::Test => 1,
        });
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(self.labels.classes() as u32).to_le_bytes());
        out.push(u8::from(self.readout.is_some()));
        for v in self.embeddings.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &l in self.labels.as_slice() {
            out.extend_from_slice(&l.to_le_bytes());
        }
        if let Some(w) = &self.readout {
            for v in w.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.metrics.len() as u32).to_le_bytes());
        for (name, value) in &self.metrics {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&value.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format { offset: 0, message: format!("bad magic {magic:?}") });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Format { offset: 4, message: format!("unsupported version {version}") });
        }
        let epoch = r.u64("epoch")?;
        let split_at = r.pos;
        let split = match r.u8("split")? {
            0 => Split::Train,
            1 => Split::Test,
            other => return Err(Error::Format { offset: split_at as u64, message: format!("bad split tag {other}") }),
        };
        let dim = r.u32("N")? as usize;
        let n = r.u32("n")? as usize;
        let classes = r.u32("C")? as usize;
        let has_readout = r.u8("has_readout")? != 0;

        let emb: Vec<f32> = r.f32s(n * dim, "embeddings")?;
        let labels_at = r.pos;
        let labels: Vec<u32> = (0..n).map(|_| r.u32("labels")).collect::<Result<_>>()?;
        let labels = LabelVector::new(labels, classes)
            .map_err(|e| Error::Format { offset: labels_at as u64, message: e.to_string() })?;
        let readout = if has_readout {
            let w = r.f32s(classes * dim, "readout")?;
            Some(Array2::from_shape_vec((classes, dim), w).expect("length checked"))
        } else {
            None
        };
        let count = r.u32("metric count")?;
        let mut metrics = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32("metric name length")? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(len, "metric name")?)
                .map_err(|e| Error::Format { offset: at as u64, message: e.to_string() })?
                .to_string();
            let value = f64::from_le_bytes(r.take(8, "metric value")?.try_into().unwrap());
            metrics.insert(name, value);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format { offset: r.pos as u64, message: "trailing bytes".into() });
        }
        let embeddings = Array2::from_shape_vec((n, dim), emb).expect("length checked");
        Self::new(epoch, split, embeddings, labels, readout, metrics)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format {
            offset: self.pos as u64,
            message: format!("truncated {what}: need {len} bytes, {} left", self.bytes.len() - self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let len = count
            .checked_mul(4)
            .ok_or_else(|| Error::Format { offset: self.pos as u64, message: format!("{what} size overflows") })?;
        let raw = self.take(len, what)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn write_checkpoint(rec: &CheckpointRecord, path: &Path) -> Result<()> {
    let tmp = path.with_extension("rrdc.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&rec.to_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointRecord> {
    CheckpointRecord::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn sample() -> CheckpointRecord {
        let emb = array![[0.1f32, -2.0, 3.5, 1e-30], [4.0, 5.0, f32::MIN_POSITIVE, -0.0], [7.25, 8.0, 9.0, 1.0]];
        let labels = LabelVector::new(vec![0, 2, 1], 3).unwrap();
        let w = Array2::from_shape_fn((3, 4), |(i, j)| (i as f32) * 0.3 - j as f32);
        let metrics = BTreeMap::from([("accuracy".to_string(), 0.75), ("loss".to_string(), 1.0 / 3.0)]);
        CheckpointRecord::new(17, Split::Test, emb, labels, Some(w), metrics).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let rec = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.rrdc");
        write_checkpoint(&rec, &path).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.to_bytes(), rec.to_bytes());
        for (a, b) in back.embeddings.iter().zip(rec.embeddings.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, rec);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        match CheckpointRecord::from_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample().to_bytes();
        for cut in [3, 10, 30, bytes.len() - 1] {
            match CheckpointRecord::from_bytes(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset as usize <= cut),
                other => panic!("unexpected {other:?}"),
            }
        }
        let mut bytes = bytes;
        bytes[4] = 9;
        assert!(matches!(CheckpointRecord::from_bytes(&bytes), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn readout_shape_checked() {
        let labels = LabelVector::new(vec![0, 1], 2).unwrap();
        let r = CheckpointRecord::new(
            0,
            Split::Train,
            Array2::zeros((2, 3)),
            labels,
            Some(Array2::zeros((2, 4))),
            BTreeMap::new(),
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    proptest! {
        #[test]
        fn arbitrary_records_roundtrip(
            n in 1usize..6, dim in 1usize..5, c in 2usize..4,
            bits in prop::collection::vec(any::<u32>(), 30),
            has_w in any::<bool>(), epoch in any::<u64>(),
        ) {
            let emb = Array2::from_shape_fn((n, dim), |(i, j)| f32::from_bits(bits[(i * dim + j) % 30]));
            let labels = LabelVector::new((0..n).map(|i| (i % c) as u32).collect(), c).unwrap();
            let w = has_w.then(|| Array2::from_shape_fn((c, dim), |(i, j)| f32::from_bits(bits[(i + j * 7) % 30])));
            let metrics = BTreeMap::from([("m\u{e9}tric".to_string(), f64::from_bits(u64::from(bits[0]) << 20))]);
            let rec = CheckpointRecord::new(epoch, Split::Train, emb, labels, w, metrics).unwrap();
            let bytes = rec.to_bytes();
            let back = CheckpointRecord::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}

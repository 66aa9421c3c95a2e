//! Time-ordered checkpoints and learning curves of one training run.
//!
//! On disk a run lives in `run_id/` with `run.json` (metadata and checkpoint
//! index), `config.json` (canonical config), `curves.csv`, optional
//! `noise.json`, and `checkpoints/epoch_{E}_{split}.rrdc`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_checkpoint, write_checkpoint, CheckpointRecord, Split};
use crate::error::{Error, Result};
use crate::tasks::NoiseInjection;

/// One row of the per-epoch learning curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: u64,
    /// Loss and accuracy against the labels the model was trained on.
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    /// Against the uncorrupted labels, present for label-noise runs.
    pub train_loss_clean: Option<f64>,
    pub train_acc_clean: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Stored {
    Memory(Arc<CheckpointRecord>),
    File(PathBuf),
}

impl Stored {
    pub fn load(&self) -> Result<Arc<CheckpointRecord>> {
        match self {
            Stored::Memory(r) => Ok(Arc::clone(r)),
            Stored::File(p) => Ok(Arc::new(read_checkpoint(p)?)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckpointPair {
    pub epoch: u64,
    pub train: Stored,
    pub test: Stored,
}

impl CheckpointPair {
    pub fn get(&self, split: Split) -> &Stored {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArchive {
    pub run_id: String,
    pub config_digest: String,
    /// Canonical configuration the run was produced from.
    pub config: serde_json::Value,
    pub checkpoints: Vec<CheckpointPair>,
    pub curves: Vec<CurvePoint>,
    pub noise: Option<NoiseInjection>,
    pub root: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunIndex {
    run_id: String,
    config_digest: String,
    tool_version: String,
    checkpoints: Vec<IndexEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    epoch: u64,
    train: String,
    test: String,
}

pub fn checkpoint_file_name(epoch: u64, split: Split) -> String {
    format!("epoch_{epoch}_{split}.rrdc")
}

const CURVE_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc,train_loss_clean,train_acc_clean";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn curves_to_csv(curves: &[CurvePoint]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for c in curves {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            c.epoch,
            c.train_loss,
            c.train_acc,
            c.test_loss,
            c.test_acc,
            opt(c.train_loss_clean),
            opt(c.train_acc_clean)
        );
    }
    s
}

pub fn curves_from_csv(text: &str) -> Result<Vec<CurvePoint>> {
    let mut lines = text.lines();
    let mut offset = 0u64;
    let header = lines.next().unwrap_or_default();
    if header != CURVE_HEADER {
        return Err(Error::Format { offset: 0, message: "unexpected curves.csv header".into() });
    }
    offset += header.len() as u64 + 1;
    let mut out = Vec::new();
    for line in lines {
        let bad = |m: &str| Error::Format { offset, message: format!("{m}: {line:?}") };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let optnum = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        out.push(CurvePoint {
            epoch: f[0].parse().map_err(|_| bad("bad epoch"))?,
            train_loss: num(f[1])?,
            train_acc: num(f[2])?,
            test_loss: num(f[3])?,
            test_acc: num(f[4])?,
            train_loss_clean: optnum(f[5])?,
            train_acc_clean: optnum(f[6])?,
        });
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

impl RunArchive {
    pub fn epochs(&self) -> Vec<u64> {
        self.checkpoints.iter().map(|c| c.epoch).collect()
    }

    pub fn load(&self, index: usize, split: Split) -> Result<Arc<CheckpointRecord>> {
        self.checkpoints[index].get(split).load()
    }

    /// Check the epoch grid is strictly increasing and records match their slot.
    pub fn validate(&self) -> Result<()> {
        for w in self.checkpoints.windows(2) {
            if w[1].epoch <= w[0].epoch {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint epochs not increasing: {} then {}",
                    w[0].epoch, w[1].epoch
                )));
            }
        }
        Ok(())
    }

    /// Write everything into `dir`, which must not already hold a run.
    pub fn write_to(&self, dir: &Path) -> Result<RunArchive> {
        let ckdir = dir.join("checkpoints");
        fs::create_dir_all(&ckdir)?;
        let mut entries = Vec::with_capacity(self.checkpoints.len());
        for pair in &self.checkpoints {
            let mut paths = Vec::new();
            for split in [Split::Train, Split::Test] {
                let name = checkpoint_file_name(pair.epoch, split);
                let path = ckdir.join(&name);
                match pair.get(split) {
                    Stored::File(src) if src == &path => {}
                    stored => write_checkpoint(stored.load()?.as_ref(), &path)?,
                }
                paths.push(path);
            }
            let test = paths.pop().unwrap();
            let train = paths.pop().unwrap();
            entries.push(CheckpointPair { epoch: pair.epoch, train: Stored::File(train), test: Stored::File(test) });
        }
        let out = RunArchive { checkpoints: entries, root: Some(dir.to_path_buf()), ..self.clone() };
        out.write_metadata()?;
        Ok(out)
    }

    /// Write `run.json`, `config.json`, `curves.csv` and `noise.json` next to the checkpoints.
    pub fn write_metadata(&self) -> Result<()> {
        let dir = self.root.as_ref().ok_or_else(|| Error::InvalidArgument("archive has no directory".into()))?;
        let index = RunIndex {
            run_id: self.run_id.clone(),
            config_digest: self.config_digest.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            checkpoints: self
                .checkpoints
                .iter()
                .map(|c| IndexEntry {
                    epoch: c.epoch,
                    train: format!("checkpoints/{}", checkpoint_file_name(c.epoch, Split::Train)),
                    test: format!("checkpoints/{}", checkpoint_file_name(c.epoch, Split::Test)),
                })
                .collect(),
        };
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&index)? + "\n")?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.config)? + "\n")?;
        fs::write(dir.join("curves.csv"), curves_to_csv(&self.curves))?;
        if let Some(noise) = &self.noise {
            fs::write(dir.join("noise.json"), serde_json::to_string(noise)? + "\n")?;
        }
        Ok(())
    }

    /// Open an archive directory; checkpoints are loaded lazily.
    pub fn open(dir: &Path) -> Result<RunArchive> {
        let index: RunIndex = serde_json::from_str(&fs::read_to_string(dir.join("run.json"))?)?;
        let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
        let curves = curves_from_csv(&fs::read_to_string(dir.join("curves.csv"))?)?;
        let noise_path = dir.join("noise.json");
        let noise =
            if noise_path.exists() { Some(serde_json::from_str(&fs::read_to_string(noise_path)?)?) } else { None };
        let checkpoints = index
            .checkpoints
            .into_iter()
            .map(|e| CheckpointPair {
                epoch: e.epoch,
                train: Stored::File(dir.join(e.train)),
                test: Stored::File(dir.join(e.test)),
            })
            .collect();
        let archive = RunArchive {
            run_id: index.run_id,
            config_digest: index.config_digest,
            config,
            checkpoints,
            curves,
            noise,
            root: Some(dir.to_path_buf()),
        };
        archive.validate()?;
        Ok(archive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::LabelVector;
    use ndarray::Array2;
    use std::collections::BTreeMap;

    fn record(epoch: u64, split: Split) -> CheckpointRecord {
        let emb = Array2::from_shape_fn((3, 2), |(i, j)| (epoch as f32) + i as f32 - j as f32);
        CheckpointRecord::new(epoch, split, emb, LabelVector::new(vec![0, 1, 1], 2).unwrap(), None, BTreeMap::new())
            .unwrap()
    }

    #[test]
    fn curves_csv_roundtrip() {
        let curves = vec![
            CurvePoint {
                epoch: 1,
                train_loss: 0.1 + 0.2,
                train_acc: 1.0 / 3.0,
                test_loss: 4.0,
                test_acc: 0.0,
                train_loss_clean: None,
                train_acc_clean: Some(0.25),
            },
            CurvePoint {
                epoch: 2,
                train_loss: 1e-300,
                train_acc: 1.0,
                test_loss: 3.5,
                test_acc: 0.5,
                train_loss_clean: Some(2.0),
                train_acc_clean: None,
            },
        ];
        assert_eq!(curves_from_csv(&curves_to_csv(&curves)).unwrap(), curves);
        assert!(matches!(curves_from_csv("nope\n"), Err(Error::Format { .. })));
    }

    #[test]
    fn two_hundred_checkpoints_read_back_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let grid: Vec<u64> = crate::trainer::checkpoint_epochs(5000, 200);
        assert!(grid.len() > 100);
        let checkpoints = grid
            .iter()
            .map(|&e| CheckpointPair {
                epoch: e,
                train: Stored::Memory(Arc::new(record(e, Split::Train))),
                test: Stored::Memory(Arc::new(record(e, Split::Test))),
            })
            .collect();
        let archive = RunArchive {
            run_id: "r".into(),
            config_digest: "d".into(),
            config: serde_json::json!({"a": 1}),
            checkpoints,
            curves: vec![],
            noise: None,
            root: None,
        };
        archive.write_to(dir.path()).unwrap();
        let back = RunArchive::open(dir.path()).unwrap();
        assert_eq!(back.epochs(), grid);
        for w in back.epochs().windows(2) {
            assert!(w[0] < w[1]);
        }
        let last = back.checkpoints.len() - 1;
        assert_eq!(*back.load(last, Split::Test).unwrap(), record(*grid.last().unwrap(), Split::Test));
    }
}

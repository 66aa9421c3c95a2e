//! `report.json` schema.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use rrd_core::dynamics::{Events, Phase, PhaseKind, SignatureFlags, Thresholds};
use rrd_core::glue::{DichotomyScheme, GeometrySummary, GlueConfig};
use rrd_core::probes::{ProbeConfig, TransferTask};

use crate::config::Measure;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Value or the reason it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct Outcome<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<T> Outcome<T> {
    pub fn from_result<E: std::fmt::Display>(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Outcome { value: Some(v), error: None },
            Err(e) => Outcome { value: None, error: Some(e.to_string()) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub config_digest: String,
    pub tool_version: String,
    pub train_seed: u64,
    pub analysis_seed: u64,
    pub label_noise: f64,
    pub checkpoints: usize,
    /// Largest ratio between consecutive checkpoint epochs; event holds
    /// count grid entries, not epochs.
    pub max_grid_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlueEstimator {
    pub config: GlueConfig,
    pub dichotomies: DichotomyScheme,
    pub seed: u64,
    pub pairwise_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEstimator {
    pub config: ProbeConfig,
    pub seed: u64,
    pub labels: String,
    pub transfer: Option<TransferTask>,
    pub transfer_split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtkEstimator {
    pub dense_limit: usize,
    pub label_kernel: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsEstimator {
    pub hold: usize,
    pub train100_level: f64,
    pub grok_window: usize,
    pub dd_window: usize,
    pub dd_rise: usize,
    pub spline_lambda_grid: Vec<f64>,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimators {
    pub embedding: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glue: Option<GlueEstimator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<ProbeEstimator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ntk: Option<NtkEstimator>,
    pub dynamics: DynamicsEstimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtkRow {
    pub align_train: f64,
    pub align_test: f64,
    pub gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub align_train_noisy: Option<f64>,
}

/// Measures at one checkpoint; absent tables were not selected or failed
/// (see `gaps`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_acc_clean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glue_train: Option<GeometrySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glue_test: Option<GeometrySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ntk: Option<NtkRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub epoch: usize,
    pub measure: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMatrix {
    pub epoch: usize,
    pub split: String,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFraction {
    pub phase: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub schema_version: u32,
    pub run: RunMeta,
    pub measures: Vec<Measure>,
    /// Some measure was not selected or has gaps.
    pub partial: bool,
    pub gaps: Vec<Gap>,
    pub estimators: Estimators,
    pub table: Vec<EpochRow>,
    pub phase_kind: PhaseKind,
    pub events: Events,
    pub phases: Vec<Phase>,
    /// Share of each metric's total drop per phase.
    pub drop_fractions: BTreeMap<String, Outcome<Vec<PhaseFraction>>>,
    pub signatures: SignatureFlags,
    /// Train/test consistency per measure.
    pub consistency: BTreeMap<String, Outcome<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairwise: Vec<PairwiseMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<Outcome<ProbeRow>>,
    /// Fields written by newer tools, kept verbatim.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl DiagnosticReport {
    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let report: DiagnosticReport =
            serde_json::from_str(text).map_err(|e| CliError::Validation(format!("malformed report: {e}")))?;
        if report.schema_version > SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "report schema {} is newer than supported {SCHEMA_VERSION}",
                report.schema_version
            )));
        }
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// One series per column, aligned to `table`.
    pub fn series(&self, name: &str) -> Vec<Option<f64>> {
        self.table.iter().map(|r| row_value(r, name)).collect()
    }

    pub fn epochs(&self) -> Vec<usize> {
        self.table.iter().map(|r| r.epoch).collect()
    }
}

/// Named scalar from one table row.
pub fn row_value(r: &EpochRow, name: &str) -> Option<f64> {
    use rrd_core::dynamics::series::*;
    match name {
        TRAIN_ACC => Some(r.train_acc),
        TEST_ACC => Some(r.test_acc),
        TRAIN_ACC_CLEAN => r.train_acc_clean,
        PROBE_TRAIN_ACC => r.probe.as_ref().map(|p| p.train_accuracy),
        PROBE_TEST_ACC => r.probe.as_ref().map(|p| p.test_accuracy),
        N_CRIT_TRAIN => r.glue_train.as_ref().map(|g| g.n_crit),
        N_CRIT_TEST => r.glue_test.as_ref().map(|g| g.n_crit),
        ALIGN_TRAIN => r.ntk.as_ref().map(|n| n.align_train),
        ALIGN_TEST => r.ntk.as_ref().map(|n| n.align_test),
        ALIGN_TRAIN_NOISY => r.ntk.as_ref().and_then(|n| n.align_train_noisy),
        "align_gap" => r.ntk.as_ref().map(|n| n.gap),
        "d_train" => r.glue_train.as_ref().and_then(|g| g.d),
        "r_train" => r.glue_train.as_ref().and_then(|g| g.r),
        "rho_c_train" => r.glue_train.as_ref().and_then(|g| g.rho_c),
        "rho_a_train" => r.glue_train.as_ref().and_then(|g| g.rho_a),
        _ => None,
    }
}

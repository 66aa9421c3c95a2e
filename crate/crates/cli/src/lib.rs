//! Orchestration behind the `rrd` binary: configs, training runs, analysis
//! reports, plots, the validation suite and parameter sweeps.

pub mod analyze;
pub mod config;
pub mod output;
pub mod plots;
pub mod report;
pub mod validate;

use std::fs;
use std::path::{Path, PathBuf};

use rrd_core::trainer::{self, ArchiveTarget, TrainConfig};
use rrd_core::RunArchive;

pub use analyze::analyze_archive;
pub use config::{AnalysisConfig, Experiment, Measure};
pub use report::DiagnosticReport;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 1 usage, 2 validation failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<rrd_core::Error> for CliError {
    fn from(e: rrd_core::Error) -> Self {
        use rrd_core::Error as E;
        match e {
            E::Io(_) | E::Format { .. } | E::Serde(_) => CliError::Io(e.to_string()),
            E::InvalidArgument(_) => CliError::Usage(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Remove `dir` if it holds `marker`, or refuse without `force`.
fn claim_dir(dir: &Path, marker: &str, force: bool, what: &str) -> Result<(), CliError> {
    let existing = dir.join(marker);
    if existing.exists() {
        if !force {
            return Err(CliError::Usage(format!("{} already holds {what}; pass --force to overwrite", dir.display())));
        }
        fs::remove_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    Ok(())
}

pub fn default_run_dir(cfg: &TrainConfig) -> PathBuf {
    PathBuf::from("runs").join(cfg.run_id())
}

/// Train into `out`, refusing to overwrite an existing archive unless `force`.
pub fn run_train(cfg: &TrainConfig, out: &Path, force: bool) -> Result<RunArchive, CliError> {
    if let Ok(prev) = RunArchive::open(out) {
        if !force {
            let same = if prev.config_digest == cfg.digest() { "the same config" } else { "a different config" };
            return Err(CliError::Usage(format!(
                "{} already holds run {} from {same} (digest {}); pass --force to overwrite",
                out.display(),
                prev.run_id,
                &prev.config_digest[..12.min(prev.config_digest.len())]
            )));
        }
    }
    claim_dir(out, "run.json", force, "a run archive")?;
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    Ok(trainer::train(cfg, ArchiveTarget::Directory(out.to_path_buf()))?.archive)
}

/// Analyze the archive at `archive_dir` and write the report under `out`.
pub fn run_analyze(
    archive_dir: &Path,
    analysis: &AnalysisConfig,
    out: &Path,
    force: bool,
) -> Result<DiagnosticReport, CliError> {
    let archive = RunArchive::open(archive_dir).map_err(|e| match e {
        rrd_core::Error::Io(err) => io(archive_dir, err),
        other => CliError::from(other),
    })?;
    claim_dir(out, "report.json", force, "a report")?;
    let report = analyze_archive(&archive, analysis)?;
    output::write_analysis(&report, out, analysis.plots)?;
    Ok(report)
}

/// Rebuild tables and plots from an existing `report.json` in `dir`.
pub fn run_report(dir: &Path, with_plots: bool) -> Result<DiagnosticReport, CliError> {
    let report = DiagnosticReport::load(&dir.join("report.json"))?;
    output::write_tables(&report, &dir.join("measures"))?;
    if with_plots {
        plots::write_plots(&report, &dir.join("plots"))?;
    }
    Ok(report)
}

/// One grid point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub name: String,
    pub settings: Vec<(String, toml::Value)>,
    pub config: TrainConfig,
}

/// Cartesian product of the experiment's `[sweep]` table over its training config.
pub fn sweep_points(exp: &Experiment) -> Result<Vec<SweepPoint>, CliError> {
    let base = exp.raw_train.as_ref().ok_or_else(|| CliError::Usage("sweep needs a training config".into()))?;
    if exp.sweep.is_empty() {
        return Err(CliError::Usage("config has no [sweep] table".into()));
    }
    let mut combos: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
    for (key, values) in &exp.sweep {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .enumerate()
        .map(|(i, settings)| {
            let mut table = base.clone();
            for (k, v) in &settings {
                config::set_dotted(&mut table, k, v.clone())?;
            }
            let config = config::train_config_from(&table)?;
            Ok(SweepPoint { name: format!("point_{i:03}"), settings, config })
        })
        .collect()
}

/// Train and analyze every grid point under `out`, then write `sweep.csv`.
pub fn run_sweep(exp: &Experiment, out: &Path, force: bool) -> Result<Vec<DiagnosticReport>, CliError> {
    let points = sweep_points(exp)?;
    claim_dir(out, "sweep.csv", force, "a sweep")?;
    let mut reports = Vec::new();
    for p in &points {
        let dir = out.join(&p.name);
        run_train(&p.config, &dir.join("run"), force)?;
        reports.push(run_analyze(&dir.join("run"), &exp.analysis, &dir.join("analysis"), force)?);
    }
    let path = out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
    let consistency_keys: Vec<String> =
        reports.first().map(|r| r.consistency.keys().cloned().collect()).unwrap_or_default();
    let mut header = vec!["point".to_string(), "run_id".to_string()];
    header.extend(exp.sweep.iter().map(|(k, _)| k.clone()));
    header.extend(["train100", "onset", "offset", "test100"].map(String::from));
    header.extend(consistency_keys.iter().map(|k| format!("consistency_{k}")));
    w.write_record(&header).map_err(|e| io(&path, e))?;
    for (p, r) in points.iter().zip(&reports) {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut row = vec![p.name.clone(), r.run.run_id.clone()];
        row.extend(p.settings.iter().map(|(_, v)| v.to_string()));
        row.extend([opt(r.events.train100), opt(r.events.onset), opt(r.events.offset), opt(r.events.test100)]);
        row.extend(
            consistency_keys
                .iter()
                .map(|k| r.consistency.get(k).and_then(|o| o.value).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&row).map_err(|e| io(&path, e))?;
    }
    w.flush().map_err(|e| io(&path, e))?;
    Ok(reports)
}

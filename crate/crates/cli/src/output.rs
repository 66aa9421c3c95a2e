//! `measures/*.csv` tables and the files of an analysis directory.

use std::fs;
use std::path::Path;

use crate::plots;
use crate::report::{row_value, DiagnosticReport};
use crate::CliError;

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    w.write_record(header).map_err(|e| io(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

pub const TIMELINE_COLUMNS: [&str; 11] = [
    "train_acc",
    "test_acc",
    "train_acc_clean",
    "probe_train_acc",
    "probe_test_acc",
    "n_crit_train",
    "n_crit_test",
    "align_train",
    "align_test",
    "align_train_noisy",
    "align_gap",
];

pub fn write_tables(report: &DiagnosticReport, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;

    let mut header = vec!["epoch"];
    header.extend(TIMELINE_COLUMNS);
    let rows = report
        .table
        .iter()
        .map(|r| {
            let mut row = vec![r.epoch.to_string()];
            row.extend(TIMELINE_COLUMNS.iter().map(|c| cell(row_value(r, c))));
            row
        })
        .collect();
    write_csv(&dir.join("timeline.csv"), &header, rows)?;

    let mut glue = Vec::new();
    for r in &report.table {
        for (split, g) in [("train", &r.glue_train), ("test", &r.glue_test)] {
            if let Some(g) = g {
                glue.push(vec![
                    r.epoch.to_string(),
                    split.to_string(),
                    g.n_crit.to_string(),
                    cell(g.d),
                    cell(g.r),
                    cell(g.rho_c),
                    cell(g.rho_a),
                    cell(g.stderr.n_crit),
                    cell(g.stderr.d),
                    cell(g.stderr.r),
                    cell(g.stderr.rho_c),
                    cell(g.stderr.rho_a),
                    g.n_samples.to_string(),
                    g.repeats.to_string(),
                    g.excluded_fraction.to_string(),
                ]);
            }
        }
    }
    if !glue.is_empty() {
        let header = [
            "epoch",
            "split",
            "n_crit",
            "D",
            "R",
            "rho_c",
            "rho_a",
            "se_n_crit",
            "se_D",
            "se_R",
            "se_rho_c",
            "se_rho_a",
            "n_samples",
            "repeats",
            "excluded_fraction",
        ];
        write_csv(&dir.join("glue.csv"), &header, glue)?;
    }

    let probes: Vec<Vec<String>> = report
        .table
        .iter()
        .filter_map(|r| {
            let p = r.probe.as_ref()?;
            Some(vec![
                r.epoch.to_string(),
                p.train_accuracy.to_string(),
                p.test_accuracy.to_string(),
                p.final_loss.to_string(),
            ])
        })
        .collect();
    if !probes.is_empty() {
        write_csv(&dir.join("probes.csv"), &["epoch", "train_accuracy", "test_accuracy", "final_loss"], probes)?;
    }

    let ntk: Vec<Vec<String>> = report
        .table
        .iter()
        .filter_map(|r| {
            let n = r.ntk.as_ref()?;
            Some(vec![
                r.epoch.to_string(),
                n.align_train.to_string(),
                n.align_test.to_string(),
                n.gap.to_string(),
                cell(n.align_train_noisy),
            ])
        })
        .collect();
    if !ntk.is_empty() {
        write_csv(&dir.join("ntk.csv"), &["epoch", "align_train", "align_test", "gap", "align_train_noisy"], ntk)?;
    }

    let phases = report.phases.iter().map(|p| vec![p.label.clone(), p.start.to_string(), p.end.to_string()]).collect();
    write_csv(&dir.join("phases.csv"), &["phase", "start", "end"], phases)?;

    for m in &report.pairwise {
        let n = m.matrix.len();
        let header: Vec<String> = std::iter::once("class".to_string()).chain((0..n).map(|c| c.to_string())).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = m
            .matrix
            .iter()
            .enumerate()
            .map(|(i, r)| std::iter::once(i.to_string()).chain(r.iter().map(|v| v.to_string())).collect())
            .collect();
        write_csv(&dir.join(format!("pairwise_{}_{}.csv", m.epoch, m.split)), &header, rows)?;
    }
    Ok(())
}

/// `report.json`, `measures/` and (optionally) `plots/` under `dir`.
pub fn write_analysis(report: &DiagnosticReport, dir: &Path, with_plots: bool) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join("report.json");
    fs::write(&path, report.to_json()?).map_err(|e| io(&path, e))?;
    write_tables(report, &dir.join("measures"))?;
    if with_plots {
        plots::write_plots(report, &dir.join("plots"))?;
    }
    Ok(())
}

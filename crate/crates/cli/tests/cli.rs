use std::fs;
use std::path::Path;
use std::process::Command;

use rrd_cli::config::{parse_experiment, parse_measures};
use rrd_cli::{run_analyze, run_report, run_sweep, run_train, AnalysisConfig, DiagnosticReport, Measure};

const TINY: &str = r#"
preset = "modadd_mlp_grok"
[task]
p = 11
[run]
epochs = 30
checkpoints = 8

[analysis]
plots = true
[analysis.glue]
n_samples = 12
repeats = 1
points_per_class = 6
[analysis.pairwise]
n_samples = 6
[analysis.probe]
epochs = 20
"#;

fn tiny() -> rrd_cli::Experiment {
    parse_experiment(TINY).unwrap()
}

fn trained(dir: &Path) -> rrd_cli::Experiment {
    let exp = tiny();
    run_train(exp.train.as_ref().unwrap(), &dir.join("run"), false).unwrap();
    exp
}

fn rrd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rrd")).args(args).output().unwrap()
}

#[test]
fn second_train_refuses_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = trained(tmp.path());
    let cfg = exp.train.as_ref().unwrap();
    let err = run_train(cfg, &tmp.path().join("run"), false).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("same config"), "{err}");
    run_train(cfg, &tmp.path().join("run"), true).unwrap();
}

#[test]
fn malformed_key_is_named() {
    let text = TINY.replace("epochs = 30", "epoch_count = 30");
    let err = parse_experiment(&text).unwrap_err();
    assert!(err.to_string().contains("epoch_count"), "{err}");
    let err = parse_experiment("[analysis]\nmeasures = [\"glu\"]\n").unwrap_err();
    assert!(err.to_string().contains("glu"), "{err}");
}

#[test]
fn ntk_only_report_is_partial() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = trained(tmp.path());
    let mut analysis = exp.analysis.clone();
    analysis.measures = vec![Measure::Ntk];
    let out = tmp.path().join("an");
    let report = run_analyze(&tmp.path().join("run"), &analysis, &out, false).unwrap();
    assert!(report.partial);
    assert!(report.table.iter().all(|r| r.glue_train.is_none() && r.probe.is_none() && r.ntk.is_some()));
    assert!(report.estimators.glue.is_none() && report.estimators.probes.is_none());
    assert!(out.join("measures/ntk.csv").exists());
    assert!(!out.join("measures/glue.csv").exists());
    assert!(!out.join("measures/probes.csv").exists());
}

#[test]
fn missing_checkpoint_leaves_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = trained(tmp.path());
    let ckpts = tmp.path().join("run/checkpoints");
    let victim = fs::read_dir(&ckpts)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().ends_with("_train.rrdc"))
        .max()
        .unwrap();
    fs::remove_file(&victim).unwrap();
    let mut analysis = exp.analysis.clone();
    analysis.measures = parse_measures("ntk,probes").unwrap();
    let report = run_analyze(&tmp.path().join("run"), &analysis, &tmp.path().join("an"), false).unwrap();
    assert!(report.partial);
    assert!(!report.gaps.is_empty());
    let gap_epoch = report.gaps[0].epoch;
    let row = report.table.iter().find(|r| r.epoch == gap_epoch).unwrap();
    assert!(row.ntk.is_none());
    assert!(report.table.iter().filter(|r| r.ntk.is_some()).count() >= report.table.len() - 1);
}

#[test]
fn analyze_is_reproducible_and_report_regenerates() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = trained(tmp.path());
    let out = tmp.path().join("an");
    run_analyze(&tmp.path().join("run"), &exp.analysis, &out, false).unwrap();
    let first = fs::read(out.join("report.json")).unwrap();
    assert!(run_analyze(&tmp.path().join("run"), &exp.analysis, &out, false).is_err());
    run_analyze(&tmp.path().join("run"), &exp.analysis, &out, true).unwrap();
    assert_eq!(first, fs::read(out.join("report.json")).unwrap());

    for name in ["timeline.csv", "glue.csv", "probes.csv", "ntk.csv", "phases.csv"] {
        assert!(out.join("measures").join(name).exists(), "{name}");
    }
    let svg = fs::read_to_string(out.join("plots/accuracy.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("epoch"));

    fs::remove_dir_all(out.join("measures")).unwrap();
    fs::remove_dir_all(out.join("plots")).unwrap();
    run_report(&out, true).unwrap();
    assert!(out.join("measures/timeline.csv").exists());
    assert!(out.join("plots/measures.svg").exists());
}

#[test]
fn unknown_report_fields_survive_reserialization() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = trained(tmp.path());
    let mut analysis = exp.analysis.clone();
    analysis.measures = vec![Measure::Ntk];
    analysis.plots = false;
    let report = run_analyze(&tmp.path().join("run"), &analysis, &tmp.path().join("an"), false).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    value["future_section"] = serde_json::json!({"k": [1, 2, 3]});
    let back = DiagnosticReport::from_json(&value.to_string()).unwrap();
    let again: serde_json::Value = serde_json::from_str(&back.to_json().unwrap()).unwrap();
    assert_eq!(again["future_section"], value["future_section"]);
    assert_eq!(again, value);

    value["schema_version"] = serde_json::json!(99);
    assert!(DiagnosticReport::from_json(&value.to_string()).is_err());
}

#[test]
fn sweep_covers_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{}\n[sweep]\n\"scale.beta\" = [1.0, 0.5]\n", TINY.replace("plots = true", "plots = false"));
    let mut exp = parse_experiment(&text).unwrap();
    exp.analysis.measures = vec![Measure::Ntk];
    let out = tmp.path().join("sweep");
    let reports = run_sweep(&exp, &out, false).unwrap();
    assert_eq!(reports.len(), 2);
    assert_ne!(reports[0].run.config_digest, reports[1].run.config_digest);
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().next().unwrap().contains("scale.beta"));
    assert!(out.join("point_001/analysis/report.json").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(rrd(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(rrd(&["--help"]).status.code(), Some(0));

    let missing = tmp.path().join("nowhere");
    assert_eq!(rrd(&["analyze", "--archive", missing.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(rrd(&["report", "--out", missing.to_str().unwrap()]).status.code(), Some(3));

    let cfg = tmp.path().join("exp.toml");
    fs::write(&cfg, TINY).unwrap();
    let run = tmp.path().join("run");
    let out = rrd(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let again = rrd(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[optimizer]\nlrate = 1\n").unwrap();
    let out = rrd(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lrate"));

    let out = rrd(&["analyze", "--archive", run.to_str().unwrap(), "--measures", "ntk,bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn default_analysis_selects_everything() {
    let a = AnalysisConfig::default();
    assert_eq!(a.measures, Measure::ALL.to_vec());
    assert!(a.seed.is_none());
}

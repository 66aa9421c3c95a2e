use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rrd_cli::config::{load_experiment, parse_measures, AnalysisConfig};
use rrd_cli::validate::{run_validate, Mode};
use rrd_cli::{default_run_dir, run_analyze, run_report, run_sweep, run_train, CliError};

#[derive(Parser)]
#[command(name = "rrd", version, about = "Representation-readout diagnostics for training runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and archive checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Archive directory (default `runs/<run_id>`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Compute measures over an archive and write report.json, CSV tables and plots.
    Analyze {
        #[arg(long)]
        archive: PathBuf,
        /// Experiment file whose `[analysis]` table is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated subset of glue, probes, ntk.
        #[arg(long)]
        measures: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default `<archive>/analysis`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Regenerate tables and plots from an existing report.json.
    Report {
        /// Directory holding report.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_plots: bool,
    },
    /// Run the analytic validation suite.
    Validate {
        #[arg(long)]
        quick: bool,
    },
    /// Train and analyze every point of the config's `[sweep]` grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        measures: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn analysis_from(
    config: Option<&PathBuf>,
    measures: Option<&str>,
    seed: Option<u64>,
) -> Result<AnalysisConfig, CliError> {
    let mut a = match config {
        Some(p) => load_experiment(p)?.analysis,
        None => AnalysisConfig::default(),
    };
    if let Some(m) = measures {
        a.measures = parse_measures(m)?;
    }
    if seed.is_some() {
        a.seed = seed;
    }
    Ok(a)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, seed, out, force } => {
            let exp = load_experiment(&config)?;
            let mut cfg =
                exp.train.ok_or_else(|| CliError::Usage(format!("{} has no training config", config.display())))?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            let out = out.unwrap_or_else(|| default_run_dir(&cfg));
            let archive = run_train(&cfg, &out, force)?;
            let last = archive.curves.last();
            println!(
                "run {} -> {} ({} checkpoints, final train {:.3} test {:.3})",
                archive.run_id,
                out.display(),
                archive.checkpoints.len(),
                last.map_or(f64::NAN, |c| c.train_acc),
                last.map_or(f64::NAN, |c| c.test_acc)
            );
        }
        Command::Analyze { archive, config, measures, seed, out, force } => {
            let analysis = analysis_from(config.as_ref(), measures.as_deref(), seed)?;
            let out = out.unwrap_or_else(|| archive.join("analysis"));
            let report = run_analyze(&archive, &analysis, &out, force)?;
            println!(
                "report -> {} ({:?} phases, partial: {})",
                out.join("report.json").display(),
                report.phase_kind,
                report.partial
            );
            for g in &report.gaps {
                eprintln!("gap: epoch {} {}: {}", g.epoch, g.measure, g.reason);
            }
        }
        Command::Report { out, no_plots } => {
            run_report(&out, !no_plots)?;
            println!("tables{} -> {}", if no_plots { "" } else { " and plots" }, out.display());
        }
        Command::Validate { quick } => {
            let checks = run_validate(if quick { Mode::Quick } else { Mode::Full });
            for c in &checks {
                println!("{}", c.line());
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(CliError::Validation(format!("{failed} of {} checks failed", checks.len())));
            }
        }
        Command::Sweep { config, measures, out, force } => {
            let mut exp = load_experiment(&config)?;
            if let Some(m) = measures {
                exp.analysis.measures = parse_measures(&m)?;
            }
            let reports = run_sweep(&exp, &out, force)?;
            println!("{} sweep points -> {}", reports.len(), out.join("sweep.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

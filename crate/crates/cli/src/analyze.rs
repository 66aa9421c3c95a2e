//! Per-checkpoint measures and dynamics over one archived run.

use std::collections::BTreeMap;

use ndarray::{concatenate, Axis};
use rayon::prelude::*;

use rrd_core::archive::CheckpointPair;
use rrd_core::dynamics::{
    self, consistency, detect_dd_events, detect_grok_events, detect_nogrok_events, gcv_grid, phase_drop_fractions,
    series, signature_flags, Events, PhaseAnnotation, PhaseKind, Timeline,
};
use rrd_core::glue::{
    estimate_geometry, pairwise_ncrit_matrix, sample_dichotomies, DichotomyEnsemble, GeometrySummary,
};
use rrd_core::kernels::{alignment_gap, alignment_value, ntk_label_alignment, LabelSource, DENSE_LIMIT};
use rrd_core::probes::{fit_probe, transfer_probe, TRANSFER_SPLIT_SEED};
use rrd_core::tasks::Dataset;
use rrd_core::trainer::TrainConfig;
use rrd_core::{group_by_label, CheckpointRecord, EmbeddingMatrix, Error, LabelVector, ManifoldSet, RunArchive, Split};

use crate::config::{AnalysisConfig, Measure};
use crate::report::*;
use crate::CliError;

struct Context<'a> {
    cfg: &'a AnalysisConfig,
    seed: u64,
    /// Labels the model was fitted to on the train split, when they differ from the clean ones.
    noisy_train: Option<LabelVector>,
}

impl Context<'_> {
    fn wants(&self, m: Measure) -> bool {
        self.cfg.measures.contains(&m)
    }
}

/// Pairwise ensemble restricted to classes that have points.
fn ensemble_for(ms: &ManifoldSet, ctx: &Context) -> rrd_core::Result<DichotomyEnsemble> {
    let full = sample_dichotomies(ms.class_count(), &ctx.cfg.dichotomies, ctx.seed)?;
    let sizes = ms.class_sizes();
    let kept: Vec<Vec<i8>> =
        full.iter().filter(|y| y.iter().zip(&sizes).all(|(&v, &s)| v == 0 || s > 0)).map(<[i8]>::to_vec).collect();
    if kept.is_empty() {
        return Err(Error::Undefined("no dichotomy has two populated classes".into()));
    }
    DichotomyEnsemble::new(ms.class_count(), kept)
}

fn glue_split(rec: &CheckpointRecord, ctx: &Context) -> rrd_core::Result<GeometrySummary> {
    let ms = group_by_label(rec.embedding_matrix()?, &rec.labels)?;
    let ens = ensemble_for(&ms, ctx)?;
    estimate_geometry(&ms, &ens, &ctx.cfg.glue, ctx.seed)
}

fn probe_row(train: &CheckpointRecord, test: &CheckpointRecord, ctx: &Context) -> rrd_core::Result<ProbeRow> {
    let labels = ctx.noisy_train.as_ref().unwrap_or(&train.labels);
    let p = fit_probe(
        (&train.embedding_matrix()?, labels),
        (&test.embedding_matrix()?, &test.labels),
        &ctx.cfg.probe,
        ctx.seed,
    )?;
    Ok(ProbeRow { train_accuracy: p.train_accuracy, test_accuracy: p.test_accuracy, final_loss: p.final_loss })
}

fn ntk_row(train: &CheckpointRecord, test: &CheckpointRecord, ctx: &Context) -> rrd_core::Result<NtkRow> {
    let ftr = train.embedding_matrix()?;
    let tr = ntk_label_alignment(&ftr, &train.labels, Split::Train, LabelSource::Clean)?;
    let te = ntk_label_alignment(&test.embedding_matrix()?, &test.labels, Split::Test, LabelSource::Clean)?;
    let noisy = ctx.noisy_train.as_ref().map(|l| alignment_value(&ftr, l)).transpose()?;
    Ok(NtkRow { align_train: tr.value, align_test: te.value, gap: alignment_gap(&tr, &te)?, align_train_noisy: noisy })
}

struct Measured {
    row: EpochRow,
    gaps: Vec<Gap>,
}

fn measure_checkpoint(pair: &CheckpointPair, archive: &RunArchive, ctx: &Context) -> Result<Measured, CliError> {
    let epoch = pair.epoch as usize;
    let curve = archive
        .curves
        .iter()
        .find(|c| c.epoch == pair.epoch)
        .ok_or_else(|| CliError::Validation(format!("curves.csv has no row for checkpoint epoch {epoch}")))?;
    let mut row = EpochRow {
        epoch,
        train_acc: curve.train_acc,
        test_acc: curve.test_acc,
        train_acc_clean: curve.train_acc_clean,
        glue_train: None,
        glue_test: None,
        probe: None,
        ntk: None,
    };
    let mut gaps = Vec::new();
    let mut gap = |measure: Measure, reason: String| gaps.push(Gap { epoch, measure: measure.to_string(), reason });
    let records = pair.train.load().and_then(|a| Ok((a, pair.test.load()?)));
    let (train, test) = match records {
        Ok(r) => r,
        Err(e) => {
            for m in &ctx.cfg.measures {
                gap(*m, format!("checkpoint unreadable: {e}"));
            }
            return Ok(Measured { row, gaps });
        }
    };
    if let Some(noisy) = &ctx.noisy_train {
        if noisy.len() != train.n_samples() {
            return Err(CliError::Validation(format!(
                "noise record has {} train labels, checkpoint {epoch} has {} rows",
                noisy.len(),
                train.n_samples()
            )));
        }
    }
    if ctx.wants(Measure::Glue) {
        match glue_split(&train, ctx) {
            Ok(g) => row.glue_train = Some(g),
            Err(e) => gap(Measure::Glue, format!("train split: {e}")),
        }
        match glue_split(&test, ctx) {
            Ok(g) => row.glue_test = Some(g),
            Err(e) => gap(Measure::Glue, format!("test split: {e}")),
        }
    }
    if ctx.wants(Measure::Probes) {
        match probe_row(&train, &test, ctx) {
            Ok(p) => row.probe = Some(p),
            Err(e) => gap(Measure::Probes, e.to_string()),
        }
    }
    if ctx.wants(Measure::Ntk) {
        match ntk_row(&train, &test, ctx) {
            Ok(n) => row.ntk = Some(n),
            Err(e) => gap(Measure::Ntk, e.to_string()),
        }
    }
    Ok(Measured { row, gaps })
}

fn timeline(table: &[EpochRow]) -> Result<Timeline, CliError> {
    let mut tl = Timeline::new(table.iter().map(|r| r.epoch).collect()).map_err(CliError::from)?;
    let names = [
        series::TRAIN_ACC,
        series::TEST_ACC,
        series::TRAIN_ACC_CLEAN,
        series::PROBE_TRAIN_ACC,
        series::PROBE_TEST_ACC,
        series::N_CRIT_TRAIN,
        series::N_CRIT_TEST,
        series::ALIGN_TRAIN,
        series::ALIGN_TEST,
        series::ALIGN_TRAIN_NOISY,
    ];
    for name in names {
        let values: Vec<Option<f64>> = table.iter().map(|r| row_value(r, name)).collect();
        if values.iter().any(Option::is_some) {
            tl.insert(name, values)?;
        }
    }
    Ok(tl)
}

/// Events from every detector, merged under the chosen phase layout.
fn events_for(tl: &Timeline, cfg: &TrainConfig, analysis: &AnalysisConfig) -> (PhaseKind, Events) {
    let grok = detect_grok_events(tl, cfg.task.kind());
    let nogrok = detect_nogrok_events(tl);
    let noisy = cfg.run.label_noise > 0.0;
    let dd = noisy.then(|| detect_dd_events(tl));
    let kind = analysis.phases.fixed().unwrap_or(if noisy {
        PhaseKind::DoubleDescent
    } else {
        match (grok.train100, grok.onset) {
            (Some(t), Some(o)) if o > t => PhaseKind::Grok,
            _ => PhaseKind::Nogrok,
        }
    });
    let events = Events {
        train100: dd.map_or(grok.train100, |d| d.train100),
        onset: grok.onset,
        offset: grok.offset,
        test100: nogrok.test100,
        peak: dd.and_then(|d| d.peak),
        recovery: dd.and_then(|d| d.recovery),
    };
    (kind, events)
}

const CONSISTENCY_PAIRS: [(&str, Option<Measure>, &str, &str); 4] = [
    ("accuracy", None, series::TRAIN_ACC, series::TEST_ACC),
    ("n_crit", Some(Measure::Glue), series::N_CRIT_TRAIN, series::N_CRIT_TEST),
    ("probe_accuracy", Some(Measure::Probes), series::PROBE_TRAIN_ACC, series::PROBE_TEST_ACC),
    ("alignment", Some(Measure::Ntk), series::ALIGN_TRAIN, series::ALIGN_TEST),
];

fn dataset_of(cfg: &TrainConfig) -> Result<Dataset, CliError> {
    cfg.task.build(cfg.run.seed).map_err(CliError::from)
}

/// Pairwise matrices on the first and last checkpoint's train split.
fn pairwise(archive: &RunArchive, ctx: &Context, gaps: &mut Vec<Gap>) -> Vec<PairwiseMatrix> {
    let p = &ctx.cfg.pairwise;
    if !p.enabled || !ctx.wants(Measure::Glue) || archive.checkpoints.is_empty() {
        return Vec::new();
    }
    let mut picks = vec![0, archive.checkpoints.len() - 1];
    picks.dedup();
    let mut out = Vec::new();
    for i in picks {
        let epoch = archive.checkpoints[i].epoch as usize;
        let matrix = archive.load(i, Split::Train).and_then(|rec| {
            if rec.labels.classes() > p.max_classes {
                return Ok(None);
            }
            let ms = group_by_label(rec.embedding_matrix()?, &rec.labels)?;
            pairwise_ncrit_matrix(&ms, p.n_samples, ctx.seed).map(Some)
        });
        match matrix {
            Ok(Some(m)) => out.push(PairwiseMatrix {
                epoch,
                split: Split::Train.to_string(),
                matrix: m.outer_iter().map(|r| r.to_vec()).collect(),
            }),
            Ok(None) => {}
            Err(e) => gaps.push(Gap { epoch, measure: "glue_pairwise".into(), reason: e.to_string() }),
        }
    }
    out
}

fn transfer(archive: &RunArchive, ds: &Dataset, ctx: &Context) -> Option<Outcome<ProbeRow>> {
    let task = ctx.cfg.transfer?;
    if !ctx.wants(Measure::Probes) {
        return None;
    }
    let last = archive.checkpoints.len().checked_sub(1)?;
    let run = || -> rrd_core::Result<ProbeRow> {
        let (tr, te) = (archive.load(last, Split::Train)?, archive.load(last, Split::Test)?);
        let x = concatenate(Axis(0), &[tr.embeddings.view(), te.embeddings.view()])
            .map_err(|e| Error::Dimension(e.to_string()))?
            .mapv(f64::from);
        let idx: Vec<usize> = ds.train.iter().chain(&ds.test).copied().collect();
        let p = transfer_probe(
            &EmbeddingMatrix::new(x)?,
            &ds.inputs.select(&idx),
            task,
            &ctx.cfg.probe,
            TRANSFER_SPLIT_SEED,
            ctx.seed,
        )?;
        Ok(ProbeRow { train_accuracy: p.train_accuracy, test_accuracy: p.test_accuracy, final_loss: p.final_loss })
    };
    Some(Outcome::from_result(run()))
}

/// Run the selected measures over every checkpoint and the dynamics on top.
pub fn analyze_archive(archive: &RunArchive, analysis: &AnalysisConfig) -> Result<DiagnosticReport, CliError> {
    let cfg: TrainConfig = serde_json::from_value(archive.config.clone())
        .map_err(|e| CliError::Validation(format!("archived config is not a training config: {e}")))?;
    if archive.checkpoints.is_empty() {
        return Err(CliError::Validation("archive has no checkpoints".into()));
    }
    let mut measures = analysis.measures.clone();
    measures.sort();
    measures.dedup();
    let analysis = &AnalysisConfig { measures, ..analysis.clone() };
    let seed = analysis.seed.unwrap_or(cfg.run.seed);
    let needs_data = archive.noise.is_some() || analysis.transfer.is_some();
    let ds = if needs_data { Some(dataset_of(&cfg)?) } else { None };
    let noisy_train = match (&archive.noise, &ds) {
        (Some(n), Some(ds)) => Some(n.noisy_labels.select(&ds.train)),
        _ => None,
    };
    let ctx = Context { cfg: analysis, seed, noisy_train };

    let measured: Vec<Measured> =
        archive.checkpoints.par_iter().map(|pair| measure_checkpoint(pair, archive, &ctx)).collect::<Result<_, _>>()?;
    let mut table = Vec::with_capacity(measured.len());
    let mut gaps = Vec::new();
    for m in measured {
        table.push(m.row);
        gaps.extend(m.gaps);
    }

    let tl = timeline(&table)?;
    let (phase_kind, events) = events_for(&tl, &cfg, analysis);
    let ann = PhaseAnnotation::new(phase_kind, events, &tl.epochs)?;

    let mut drop_fractions = BTreeMap::new();
    if analysis.measures.contains(&Measure::Glue) {
        for metric in [series::N_CRIT_TRAIN, series::N_CRIT_TEST] {
            let fr = phase_drop_fractions(&tl, metric, &ann)
                .map(|v| v.into_iter().map(|(phase, fraction)| PhaseFraction { phase, fraction }).collect());
            drop_fractions.insert(metric.to_string(), Outcome::from_result(fr));
        }
    }
    let signatures = signature_flags(&tl, &ann, &analysis.thresholds);
    let mut consistency_scores = BTreeMap::new();
    for (name, needs, a, b) in CONSISTENCY_PAIRS {
        if needs.is_some_and(|m| !analysis.measures.contains(&m)) {
            continue;
        }
        let value = match (tl.complete(a), tl.complete(b)) {
            (Some(x), Some(y)) => consistency(&x, &y),
            _ => Err(Error::Undefined(format!("series '{a}' or '{b}' has gaps"))),
        };
        consistency_scores.insert(name.to_string(), Outcome::from_result(value));
    }

    let pairwise = pairwise(archive, &ctx, &mut gaps);
    let transfer = ds.as_ref().and_then(|ds| transfer(archive, ds, &ctx));

    let epochs = &tl.epochs;
    let max_grid_ratio = epochs.windows(2).map(|w| w[1] as f64 / w[0] as f64).fold(1.0, f64::max);
    let wants = |m| analysis.measures.contains(&m);
    let estimators = Estimators {
        embedding: "[phi; 1] per checkpoint, stored as f32".into(),
        glue: wants(Measure::Glue).then(|| GlueEstimator {
            config: analysis.glue.clone(),
            dichotomies: analysis.dichotomies.clone(),
            seed,
            pairwise_samples: (analysis.pairwise.enabled && !pairwise.is_empty())
                .then_some(analysis.pairwise.n_samples),
        }),
        probes: wants(Measure::Probes).then(|| ProbeEstimator {
            config: analysis.probe.clone(),
            seed,
            labels: if archive.noise.is_some() { "trained (noisy)".into() } else { "trained".into() },
            transfer: analysis.transfer,
            transfer_split_seed: TRANSFER_SPLIT_SEED,
        }),
        ntk: wants(Measure::Ntk)
            .then(|| NtkEstimator { dense_limit: DENSE_LIMIT, label_kernel: "one-hot, clean labels".into() }),
        dynamics: DynamicsEstimator {
            hold: dynamics::HOLD,
            train100_level: dynamics::TRAIN100_LEVEL,
            grok_window: dynamics::GROK_WINDOW,
            dd_window: dynamics::DD_WINDOW,
            dd_rise: dynamics::DD_RISE,
            spline_lambda_grid: gcv_grid(),
            thresholds: analysis.thresholds,
        },
    };
    Ok(DiagnosticReport {
        schema_version: SCHEMA_VERSION,
        run: RunMeta {
            run_id: archive.run_id.clone(),
            config_digest: archive.config_digest.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            train_seed: cfg.run.seed,
            analysis_seed: seed,
            label_noise: cfg.run.label_noise,
            checkpoints: table.len(),
            max_grid_ratio,
        },
        partial: analysis.measures.len() < Measure::ALL.len() || !gaps.is_empty(),
        measures: analysis.measures.clone(),
        gaps,
        estimators,
        table,
        phase_kind,
        events,
        phases: ann.phases,
        drop_fractions,
        signatures,
        consistency: consistency_scores,
        pairwise,
        transfer,
        extra: BTreeMap::new(),
    })
}

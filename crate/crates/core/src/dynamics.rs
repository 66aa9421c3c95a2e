//! Event detection, phases, diagnostic signatures and train/test consistency.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::TaskKind;

pub mod series {
    pub const TRAIN_ACC: &str = "train_acc";
    pub const TEST_ACC: &str = "test_acc";
    pub const TRAIN_ACC_CLEAN: &str = "train_acc_clean";
    pub const PROBE_TRAIN_ACC: &str = "probe_train_acc";
    pub const PROBE_TEST_ACC: &str = "probe_test_acc";
    pub const N_CRIT_TRAIN: &str = "n_crit_train";
    pub const N_CRIT_TEST: &str = "n_crit_test";
    pub const ALIGN_TRAIN: &str = "align_train";
    pub const ALIGN_TEST: &str = "align_test";
    pub const ALIGN_TRAIN_NOISY: &str = "align_train_noisy";
}

pub const HOLD: usize = 3;
pub const TRAIN100_LEVEL: f64 = 0.99;
pub const GROK_WINDOW: usize = 5;
pub const DD_WINDOW: usize = 15;
pub const DD_RISE: usize = 5;

/// Series on a shared epoch grid; `None` marks a missing value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub epochs: Vec<usize>,
    pub series: BTreeMap<String, Vec<Option<f64>>>,
}

impl Timeline {
    pub fn new(epochs: Vec<usize>) -> Result<Self> {
        if epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("epoch grid must be strictly increasing".into()));
        }
        Ok(Timeline { epochs, series: BTreeMap::new() })
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn insert(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.epochs.len() {
            return Err(Error::Dimension(format!(
                "series '{name}' has {} values for {} epochs",
                values.len(),
                self.len()
            )));
        }
        self.series.insert(name.to_string(), values);
        Ok(())
    }

    pub fn insert_full(&mut self, name: &str, values: &[f64]) -> Result<()> {
        self.insert(name, values.iter().map(|&v| Some(v)).collect())
    }

    /// The series if it exists and has no gaps.
    pub fn complete(&self, name: &str) -> Option<Vec<f64>> {
        self.series.get(name)?.iter().copied().collect()
    }

    fn index_of(&self, epoch: usize) -> Option<usize> {
        self.epochs.binary_search(&epoch).ok()
    }
}

/// Centered moving average; near the ends the window shrinks equally on
/// both sides. Even windows are widened by one.
pub fn smooth_ma(x: &[f64], window: usize) -> Vec<f64> {
    let h = window.max(1) / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let k = h.min(i).min(n - 1 - i);
            x[i - k..=i + k].iter().sum::<f64>() / (2 * k + 1) as f64
        })
        .collect()
}

/// First index from which `hit` holds for `HOLD` consecutive entries.
fn first_held(x: &[f64], hit: impl Fn(f64) -> bool) -> Option<usize> {
    (0..x.len().saturating_sub(HOLD - 1)).find(|&i| x[i..i + HOLD].iter().all(|&v| hit(v)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Events {
    pub train100: Option<usize>,
    pub onset: Option<usize>,
    pub offset: Option<usize>,
    pub test100: Option<usize>,
    pub peak: Option<usize>,
    pub recovery: Option<usize>,
}

impl Events {
    fn ordered(&self) -> Vec<(&'static str, usize)> {
        let all = [
            ("train100", self.train100),
            ("peak", self.peak),
            ("onset", self.onset),
            ("recovery", self.recovery),
            ("offset", self.offset),
            ("test100", self.test100),
        ];
        let mut v: Vec<(&'static str, usize)> = all.iter().filter_map(|&(k, e)| e.map(|e| (k, e))).collect();
        v.sort_by_key(|&(_, e)| e);
        v
    }
}

fn train100(tl: &Timeline, name: &str) -> Option<usize> {
    let x = tl.complete(name)?;
    first_held(&x, |v| v >= TRAIN100_LEVEL).map(|i| tl.epochs[i])
}

pub fn detect_grok_events(tl: &Timeline, task: TaskKind) -> Events {
    let mut ev = Events { train100: train100(tl, series::TRAIN_ACC), ..Events::default() };
    if let Some(test) = tl.complete(series::TEST_ACC) {
        let s = smooth_ma(&test, GROK_WINDOW);
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (on, off) = match task {
            TaskKind::SparseParity => (0.6, 0.95 * max),
            _ => (0.05 * max, 0.95 * max),
        };
        if max > 0.0 {
            ev.onset = first_held(&s, |v| v >= on).map(|i| tl.epochs[i]);
            ev.offset = first_held(&s, |v| v >= off).map(|i| tl.epochs[i]);
        }
    }
    ev
}

pub fn detect_nogrok_events(tl: &Timeline) -> Events {
    Events { train100: train100(tl, series::TRAIN_ACC), test100: train100(tl, series::TEST_ACC), ..Events::default() }
}

/// Peak of the smoothed validation curve, then the first post-valley point
/// that starts `DD_RISE` consecutive increases. Train-100 uses clean labels
/// when that series exists.
pub fn detect_dd_events(tl: &Timeline) -> Events {
    let clean =
        if tl.series.contains_key(series::TRAIN_ACC_CLEAN) { series::TRAIN_ACC_CLEAN } else { series::TRAIN_ACC };
    let mut ev = Events { train100: train100(tl, clean), ..Events::default() };
    let Some(test) = tl.complete(series::TEST_ACC) else { return ev };
    if test.is_empty() {
        return ev;
    }
    let s = smooth_ma(&test, DD_WINDOW);
    let peak = (0..s.len()).fold(0, |b, i| if s[i] > s[b] { i } else { b });
    ev.peak = Some(tl.epochs[peak]);
    let valley = (peak..s.len()).fold(peak, |b, i| if s[i] < s[b] { i } else { b });
    if valley > peak {
        ev.recovery = (valley..s.len().saturating_sub(DD_RISE))
            .find(|&i| (i..i + DD_RISE).all(|j| s[j + 1] > s[j]))
            .map(|i| tl.epochs[i]);
    }
    ev
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Grok,
    Nogrok,
    DoubleDescent,
    Clean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseAnnotation {
    pub kind: PhaseKind,
    pub events: Events,
    pub phases: Vec<Phase>,
}

impl PhaseAnnotation {
    /// Split `[first, last]` at the events present, in epoch order. Phases are
    /// named after their bounding events, e.g. `train100->onset`.
    pub fn new(kind: PhaseKind, events: Events, epochs: &[usize]) -> Result<Self> {
        let (Some(&first), Some(&last)) = (epochs.first(), epochs.last()) else {
            return Err(Error::InvalidArgument("empty epoch grid".into()));
        };
        let used = match kind {
            PhaseKind::Grok => {
                Events { train100: events.train100, onset: events.onset, offset: events.offset, ..Events::default() }
            }
            PhaseKind::Nogrok => Events { train100: events.train100, test100: events.test100, ..Events::default() },
            PhaseKind::DoubleDescent => Events { peak: events.peak, recovery: events.recovery, ..Events::default() },
            PhaseKind::Clean => Events { train100: events.train100, ..Events::default() },
        };
        let mut cuts = vec![("start", first)];
        cuts.extend(used.ordered().into_iter().filter(|&(_, e)| e > first && e < last));
        cuts.push(("end", last));
        let phases = cuts
            .windows(2)
            .map(|w| Phase { label: format!("{}->{}", w[0].0, w[1].0), start: w[0].1, end: w[1].1 })
            .collect();
        Ok(PhaseAnnotation { kind, events, phases })
    }

    pub fn phase(&self, label: &str) -> Option<&Phase> {
        self.phases.iter().find(|p| p.label == label)
    }

    /// Phases that end at or before `epoch`.
    pub fn phases_before(&self, epoch: usize) -> Vec<&Phase> {
        self.phases.iter().filter(|p| p.end <= epoch).collect()
    }
}

/// Share of the total drop `m(first) − m(last)` that happens inside each phase.
pub fn phase_drop_fractions(tl: &Timeline, metric: &str, ann: &PhaseAnnotation) -> Result<Vec<(String, f64)>> {
    let x =
        tl.complete(metric).ok_or_else(|| Error::Undefined(format!("series '{metric}' is missing or incomplete")))?;
    if x.is_empty() {
        return Err(Error::Undefined("empty series".into()));
    }
    let total = x[0] - x[x.len() - 1];
    if total == 0.0 || !total.is_finite() {
        return Err(Error::Undefined(format!("total drop of '{metric}' is zero")));
    }
    ann.phases
        .iter()
        .map(|p| {
            let (a, b) = tl
                .index_of(p.start)
                .zip(tl.index_of(p.end))
                .ok_or_else(|| Error::InvalidArgument(format!("phase {} is off the epoch grid", p.label)))?;
            Ok((p.label.clone(), (x[a] - x[b]) / total))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub readout_overfit: f64,
    /// Minimum window as a fraction of the run.
    pub degradation_window: f64,
    pub degradation_spearman: f64,
    pub suboptimal_readout: f64,
    pub spurious_alignment: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            readout_overfit: 0.2,
            degradation_window: 0.1,
            degradation_spearman: 0.8,
            suboptimal_readout: 0.1,
            spurious_alignment: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    /// `None` when a required series is missing.
    pub magnitude: Option<f64>,
    pub fired: bool,
    /// Epoch (or window start) where the magnitude is attained.
    pub epoch: Option<usize>,
    pub threshold: f64,
    /// Largest statistic inside each phase.
    pub per_phase: BTreeMap<String, f64>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureFlags {
    pub readout_overfit: Signature,
    pub representation_degradation: Signature,
    pub suboptimal_readout: Signature,
    pub spurious_alignment: Signature,
    pub thresholds: Thresholds,
}

fn pointwise(
    tl: &Timeline,
    ann: &PhaseAnnotation,
    names: &[&str],
    threshold: f64,
    f: impl Fn(&[f64]) -> f64,
) -> Signature {
    let cols: Vec<Option<Vec<f64>>> = names.iter().map(|n| tl.complete(n)).collect();
    let missing: Vec<String> =
        names.iter().zip(&cols).filter(|(_, c)| c.is_none()).map(|(n, _)| n.to_string()).collect();
    if !missing.is_empty() || tl.is_empty() {
        return Signature {
            magnitude: None,
            fired: false,
            epoch: None,
            threshold,
            per_phase: BTreeMap::new(),
            missing,
        };
    }
    let cols: Vec<Vec<f64>> = cols.into_iter().flatten().collect();
    let stat: Vec<f64> = (0..tl.len()).map(|i| f(&cols.iter().map(|c| c[i]).collect::<Vec<_>>())).collect();
    let best = (0..stat.len()).fold(0, |b, i| if stat[i] > stat[b] { i } else { b });
    let per_phase = ann
        .phases
        .iter()
        .map(|p| {
            let m = (0..tl.len())
                .filter(|&i| tl.epochs[i] >= p.start && tl.epochs[i] <= p.end)
                .map(|i| stat[i])
                .fold(f64::NEG_INFINITY, f64::max);
            (p.label.clone(), m)
        })
        .collect();
    Signature {
        magnitude: Some(stat[best]),
        fired: stat[best] > threshold,
        epoch: Some(tl.epochs[best]),
        threshold,
        per_phase,
        missing,
    }
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let den = (saa * sbb).sqrt();
    (den > 0.0).then(|| (sab / den).clamp(-1.0, 1.0))
}

/// Spearman rank correlation; `None` if either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&ranks(a), &ranks(b))
}

fn ols_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let (mt, my) = (t.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let num: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let den: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    num / den
}

/// Windows where probe test accuracy falls while `n_crit` rises, both as
/// monotone trends (|Spearman| against epoch at least the threshold).
fn degradation(tl: &Timeline, ann: &PhaseAnnotation, th: &Thresholds) -> Signature {
    let names = [series::PROBE_TEST_ACC, series::N_CRIT_TEST];
    let missing: Vec<String> = names.iter().filter(|n| tl.complete(n).is_none()).map(|n| n.to_string()).collect();
    let mut sig = Signature {
        magnitude: None,
        fired: false,
        epoch: None,
        threshold: th.degradation_spearman,
        per_phase: BTreeMap::new(),
        missing,
    };
    if !sig.missing.is_empty() || tl.len() < 3 {
        return sig;
    }
    let acc = tl.complete(names[0]).expect("checked");
    let nc = tl.complete(names[1]).expect("checked");
    let (e0, e1) = (tl.epochs[0] as f64, tl.epochs[tl.len() - 1] as f64);
    let t: Vec<f64> = tl.epochs.iter().map(|&e| (e as f64 - e0) / (e1 - e0)).collect();
    let min_len = ((th.degradation_window * tl.len() as f64).ceil() as usize).max(3);
    let mut best: Option<(f64, usize)> = None;
    for i in 0..tl.len() {
        for j in (i + min_len - 1)..tl.len() {
            let w = i..j + 1;
            let (ra, rn) = (spearman(&t[w.clone()], &acc[w.clone()]), spearman(&t[w.clone()], &nc[w.clone()]));
            let (Some(ra), Some(rn)) = (ra, rn) else { continue };
            if ra <= -th.degradation_spearman && rn >= th.degradation_spearman {
                let m = -ols_slope(&t[w.clone()], &acc[w.clone()]) * ols_slope(&t[w.clone()], &nc[w]);
                if best.is_none_or(|(b, _)| m > b) {
                    best = Some((m, i));
                }
                let label =
                    ann.phases.iter().find(|p| tl.epochs[i] >= p.start && tl.epochs[i] < p.end.max(p.start + 1));
                if let Some(p) = label {
                    let e = sig.per_phase.entry(p.label.clone()).or_insert(f64::NEG_INFINITY);
                    *e = e.max(m);
                }
            }
        }
    }
    sig.magnitude = Some(best.map_or(0.0, |b| b.0));
    sig.epoch = best.map(|b| tl.epochs[b.1]);
    sig.fired = best.is_some();
    sig
}

pub fn signature_flags(tl: &Timeline, ann: &PhaseAnnotation, th: &Thresholds) -> SignatureFlags {
    use series::*;
    SignatureFlags {
        readout_overfit: pointwise(
            tl,
            ann,
            &[TRAIN_ACC, TEST_ACC, PROBE_TRAIN_ACC, PROBE_TEST_ACC],
            th.readout_overfit,
            |v| (v[0] - v[1]) - (v[2] - v[3]),
        ),
        representation_degradation: degradation(tl, ann, th),
        suboptimal_readout: pointwise(tl, ann, &[PROBE_TEST_ACC, TEST_ACC], th.suboptimal_readout, |v| v[0] - v[1]),
        spurious_alignment: pointwise(
            tl,
            ann,
            &[ALIGN_TRAIN_NOISY, ALIGN_TRAIN, ALIGN_TEST],
            th.spurious_alignment,
            |v| v[0] - v[1].max(v[2]),
        ),
        thresholds: *th,
    }
}

/// Penalty matrix `K = Q R⁻¹ Qᵀ` of the natural cubic spline on knots `x`.
fn spline_penalty(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let m = n - 2;
    let mut q = DMatrix::zeros(n, m);
    let mut r = DMatrix::zeros(m, m);
    for c in 0..m {
        let j = c + 1;
        q[(j - 1, c)] = 1.0 / h[j - 1];
        q[(j, c)] = -1.0 / h[j - 1] - 1.0 / h[j];
        q[(j + 1, c)] = 1.0 / h[j];
        r[(c, c)] = (h[j - 1] + h[j]) / 3.0;
        if c + 1 < m {
            r[(c, c + 1)] = h[j] / 6.0;
            r[(c + 1, c)] = h[j] / 6.0;
        }
    }
    let rinv_qt = r.cholesky().expect("spline band matrix is positive definite").solve(&q.transpose());
    let k = &q * rinv_qt;
    (&k + k.transpose()) * 0.5
}

/// λ grid searched by generalized cross-validation.
pub fn gcv_grid() -> Vec<f64> {
    (0..41).map(|i| 10f64.powf(-4.0 + 0.2 * i as f64)).collect()
}

/// Natural cubic smoothing spline on unit-spaced knots, `λ` chosen by GCV.
pub fn smoothing_spline(y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = y.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("smoothing spline needs at least 4 points, got {n}")));
    }
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let eig = spline_penalty(&x).symmetric_eigen();
    let u = &eig.eigenvectors;
    let mu: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let coef = u.transpose() * DVector::from_row_slice(y);
    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    for lam in gcv_grid() {
        let shrink = DVector::from_iterator(n, mu.iter().map(|&m| 1.0 / (1.0 + lam * m)));
        let fit = u * coef.component_mul(&shrink);
        let rss: f64 = fit.iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum();
        let df = n as f64 - shrink.sum();
        let gcv = n as f64 * rss / (df * df);
        if best.as_ref().is_none_or(|b| gcv < b.0) {
            best = Some((gcv, lam, fit));
        }
    }
    let (_, lam, fit) = best.expect("nonempty grid");
    Ok((fit.iter().copied().collect(), lam))
}

/// Pearson correlation of the first differences of the spline-smoothed series.
pub fn consistency(train: &[f64], test: &[f64]) -> Result<f64> {
    if train.len() != test.len() {
        return Err(Error::Dimension(format!("series lengths {} and {}", train.len(), test.len())));
    }
    let (a, _) = smoothing_spline(train)?;
    let (b, _) = smoothing_spline(test)?;
    let da: Vec<f64> = a.windows(2).map(|w| w[1] - w[0]).collect();
    let db: Vec<f64> = b.windows(2).map(|w| w[1] - w[0]).collect();
    // a constant series leaves only rounding noise after smoothing
    let flat = |d: &[f64], y: &[f64]| {
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        d.iter().all(|v| v.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE))
    };
    if flat(&da, &a) || flat(&db, &b) {
        return Err(Error::Undefined("smoothed differences have zero variance".into()));
    }
    pearson(&da, &db).ok_or_else(|| Error::Undefined("smoothed differences have zero variance".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_cases() {
        assert_eq!(smooth_ma(&[2.0; 7], 5), vec![2.0; 7]);
        let x = [0.3, 1.0, -2.0, 5.0];
        assert_eq!(smooth_ma(&x, 1), x.to_vec());
        let mut imp = vec![0.0; 11];
        imp[5] = 1.0;
        let s = smooth_ma(&imp, 5);
        for (i, v) in s.iter().enumerate() {
            let expect = if (3..=7).contains(&i) { 0.2 } else { 0.0 };
            assert!((v - expect).abs() < 1e-15);
        }
    }

    fn timeline(train: &[f64], test: &[f64]) -> Timeline {
        let mut tl = Timeline::new((0..train.len()).collect()).unwrap();
        tl.insert_full(series::TRAIN_ACC, train).unwrap();
        tl.insert_full(series::TEST_ACC, test).unwrap();
        tl
    }

    #[test]
    fn step_train_curve() {
        let train: Vec<f64> = (0..30).map(|e| if e >= 10 { 1.0 } else { 0.3 }).collect();
        let tl = timeline(&train, &[0.0; 30]);
        let ev = detect_grok_events(&tl, TaskKind::Modadd);
        assert_eq!(ev.train100, Some(10));
        assert_eq!((ev.onset, ev.offset), (None, None));
    }

    #[test]
    fn dd_monotone_and_ties() {
        let up: Vec<f64> = (0..40).map(|e| e as f64 / 40.0).collect();
        let ev = detect_dd_events(&timeline(&up, &up));
        assert_eq!(ev.peak, Some(39));
        assert_eq!(ev.recovery, None);
        let mut two = vec![0.0; 60];
        two[15] = 1.0;
        two[45] = 1.0;
        let ev = detect_dd_events(&timeline(&two, &two));
        assert_eq!(ev.peak, Some(8));
    }

    #[test]
    fn phases_partition_the_run() {
        let ev = Events { train100: Some(10), onset: Some(40), offset: Some(70), ..Events::default() };
        let ann = PhaseAnnotation::new(PhaseKind::Grok, ev, &(0..=100).collect::<Vec<_>>()).unwrap();
        let labels: Vec<&str> = ann.phases.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(labels, ["start->train100", "train100->onset", "onset->offset", "offset->end"]);
        assert_eq!(ann.phases[0].start, 0);
        assert_eq!(ann.phases[3].end, 100);
        assert!(ann.phases.windows(2).all(|w| w[0].end == w[1].start));
    }

    #[test]
    fn spearman_handles_ties() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![1.5, 0.0, 1.5]);
    }

    #[test]
    fn spline_reproduces_lines() {
        let y: Vec<f64> = (0..12).map(|i| 2.0 - 0.5 * i as f64).collect();
        let (fit, _) = smoothing_spline(&y).unwrap();
        for (a, b) in fit.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(smoothing_spline(&[1.0, 2.0, 3.0]).is_err());
    }
}

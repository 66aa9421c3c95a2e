use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use rrd_core::dynamics::*;
use rrd_core::trainer::TaskKind;

fn timeline(train: &[f64], test: &[f64]) -> Timeline {
    let mut tl = Timeline::new((0..train.len()).map(|i| 10 * i).collect()).unwrap();
    tl.insert_full(series::TRAIN_ACC, train).unwrap();
    tl.insert_full(series::TEST_ACC, test).unwrap();
    tl
}

/// Direct reading of the event rule: smooth with a centered window clipped to
/// the data, then scan for three consecutive values at or above the level.
fn naive_crossing(x: &[f64], window: usize, level: impl Fn(f64) -> f64) -> Option<usize> {
    let n = x.len() as isize;
    let h = (window / 2) as isize;
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let k = h.min(i).min(n - 1 - i);
            let vals: Vec<f64> = (i - k..=i + k).map(|j| x[j as usize]).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    let max = s.iter().cloned().fold(f64::MIN, f64::max);
    let t = level(max);
    (0..s.len() - 2).find(|&i| s[i] >= t && s[i + 1] >= t && s[i + 2] >= t)
}

#[test]
fn ramp_onset_and_offset_follow_definition() {
    let test: Vec<f64> = (0..120)
        .map(|e| {
            if e < 50 {
                0.0
            } else if e < 80 {
                (e - 50) as f64 / 30.0
            } else {
                1.0
            }
        })
        .collect();
    let tl = timeline(&[1.0; 120], &test);
    let ev = detect_grok_events(&tl, TaskKind::Modadd);
    let on = naive_crossing(&test, 5, |m| 0.05 * m).unwrap();
    let off = naive_crossing(&test, 5, |m| 0.95 * m).unwrap();
    assert_eq!(ev.onset, Some(10 * on));
    assert_eq!(ev.offset, Some(10 * off));
    assert!((49..=52).contains(&on));
    assert!((76..=80).contains(&off));
    assert_eq!(ev.train100, Some(0));
}

#[test]
fn parity_uses_absolute_onset() {
    let test: Vec<f64> = (0..60).map(|e| if e < 30 { 0.5 } else { 0.9 }).collect();
    let tl = timeline(&[1.0; 60], &test);
    let ev = detect_grok_events(&tl, TaskKind::SparseParity);
    let on = naive_crossing(&test, 5, |_| 0.6).unwrap();
    assert_eq!(ev.onset, Some(10 * on));
    let ev = detect_grok_events(&tl, TaskKind::Modadd);
    assert_eq!(ev.onset, Some(0));
}

#[test]
fn nogrok_events() {
    let train: Vec<f64> = (0..50).map(|e| (e as f64 / 10.0).min(1.0)).collect();
    let test: Vec<f64> = (0..50).map(|e| (e as f64 / 20.0).min(1.0)).collect();
    let ev = detect_nogrok_events(&timeline(&train, &test));
    assert_eq!(ev.train100, Some(100));
    assert_eq!(ev.test100, Some(200));
}

#[test]
fn rise_dip_rise_curve() {
    // crest at 40, trough at 80, steady climb afterwards
    let test: Vec<f64> = (0..160)
        .map(|e| {
            let e = e as f64;
            if e <= 40.0 {
                e / 40.0
            } else if e <= 80.0 {
                1.0 - 0.5 * (e - 40.0) / 40.0
            } else {
                0.5 + 0.6 * (e - 80.0) / 80.0
            }
        })
        .collect();
    let ev = detect_dd_events(&timeline(&[1.0; 160], &test));
    // the second rise ends higher than the first crest, so cut it at the crest level
    assert!(ev.peak.unwrap() >= 1550);
    let capped: Vec<f64> = test.iter().enumerate().map(|(i, &v)| if i > 80 { v.min(0.8) } else { v }).collect();
    let ev = detect_dd_events(&timeline(&[1.0; 160], &capped));
    // asymmetric slopes move the smoothed crest a little past the raw one
    let s: Vec<f64> = (0..160usize)
        .map(|i| {
            let k = 7usize.min(i).min(159 - i);
            capped[i - k..=i + k].iter().sum::<f64>() / (2 * k + 1) as f64
        })
        .collect();
    let crest = (0..160).fold(0, |b, i| if s[i] > s[b] { i } else { b });
    assert_eq!(ev.peak, Some(10 * crest));
    assert!((40..=45).contains(&crest));
    let rec = ev.recovery.unwrap() / 10;
    assert!((75..=85).contains(&rec), "{rec}");
}

proptest! {
    #[test]
    fn delaying_gains_never_moves_events_earlier(start in 5usize..40, len in 1usize..30, k in 0usize..20) {
        let curve = |delay: usize| -> Vec<f64> {
            (0..100).map(|e| {
                let s = start + delay;
                if e < s { 0.0 } else { ((e - s) as f64 / len as f64).min(1.0) }
            }).collect()
        };
        let a = detect_grok_events(&timeline(&[1.0; 100], &curve(0)), TaskKind::Modadd);
        let b = detect_grok_events(&timeline(&[1.0; 100], &curve(k)), TaskKind::Modadd);
        prop_assert!(b.onset >= a.onset);
        prop_assert!(b.offset >= a.offset);
    }

    #[test]
    fn drop_fractions_sum_to_one(vals in prop::collection::vec(-5.0f64..5.0, 20), t1 in 2usize..8, t2 in 9usize..14) {
        prop_assume!((vals[0] - vals[19]).abs() > 1e-6);
        let mut tl = Timeline::new((0..20).collect()).unwrap();
        tl.insert_full("m", &vals).unwrap();
        let ev = Events { train100: Some(t1), onset: Some(t2), offset: Some(16), ..Events::default() };
        let ann = PhaseAnnotation::new(PhaseKind::Grok, ev, &tl.epochs).unwrap();
        let total: f64 = phase_drop_fractions(&tl, "m", &ann).unwrap().iter().map(|p| p.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn consistency_is_symmetric_and_shift_invariant(a in prop::collection::vec(-1.0f64..1.0, 12), b in prop::collection::vec(-1.0f64..1.0, 12), c in -10.0f64..10.0) {
        let ab = consistency(&a, &b);
        prop_assume!(ab.is_ok());
        let ab = ab.unwrap();
        prop_assert_eq!(ab, consistency(&b, &a).unwrap());
        let a2: Vec<f64> = a.iter().map(|v| v + c).collect();
        let b2: Vec<f64> = b.iter().map(|v| v + c).collect();
        prop_assert!((consistency(&a2, &b2).unwrap() - ab).abs() < 1e-6);
    }
}

#[test]
fn linear_and_concentrated_drops() {
    let mut tl = Timeline::new((0..=100).collect()).unwrap();
    tl.insert_full("lin", &(0..=100).map(|e| 10.0 - e as f64 * 0.1).collect::<Vec<_>>()).unwrap();
    tl.insert_full("step", &(0..=100).map(|e| if e < 60 { 3.0 } else { 1.0 }).collect::<Vec<_>>()).unwrap();
    let ev = Events { train100: Some(25), onset: Some(50), offset: Some(75), ..Events::default() };
    let ann = PhaseAnnotation::new(PhaseKind::Grok, ev, &tl.epochs).unwrap();
    for (_, f) in phase_drop_fractions(&tl, "lin", &ann).unwrap() {
        assert!((f - 0.25).abs() < 1e-12);
    }
    let f: Vec<f64> = phase_drop_fractions(&tl, "step", &ann).unwrap().iter().map(|p| p.1).collect();
    assert_eq!(f, vec![0.0, 0.0, 1.0, 0.0]);
    tl.insert_full("flat", &[1.0; 101]).unwrap();
    assert!(phase_drop_fractions(&tl, "flat", &ann).is_err());
}

#[test]
fn probe_equal_to_model_gives_zero_signatures() {
    let train: Vec<f64> = (0..30).map(|e| (e as f64 / 10.0).min(1.0)).collect();
    let test: Vec<f64> = (0..30).map(|e| (e as f64 / 30.0).min(1.0)).collect();
    let mut tl = timeline(&train, &test);
    tl.insert_full(series::PROBE_TRAIN_ACC, &train).unwrap();
    tl.insert_full(series::PROBE_TEST_ACC, &test).unwrap();
    let ann = PhaseAnnotation::new(PhaseKind::Nogrok, detect_nogrok_events(&tl), &tl.epochs).unwrap();
    let flags = signature_flags(&tl, &ann, &Thresholds::default());
    assert_eq!(flags.readout_overfit.magnitude, Some(0.0));
    assert_eq!(flags.suboptimal_readout.magnitude, Some(0.0));
    assert!(!flags.readout_overfit.fired && !flags.suboptimal_readout.fired);
    assert_eq!(flags.spurious_alignment.magnitude, None);
    assert_eq!(flags.spurious_alignment.missing.len(), 3);
}

#[test]
fn degradation_window_is_detected() {
    let n = 50;
    let acc: Vec<f64> =
        (0..n).map(|e| if (20..35).contains(&e) { 0.9 - 0.02 * (e - 20) as f64 } else { 0.9 }).collect();
    let nc: Vec<f64> = (0..n).map(|e| if (20..35).contains(&e) { 5.0 + 0.1 * (e - 20) as f64 } else { 5.0 }).collect();
    let mut tl = timeline(&vec![1.0; n], &vec![0.5; n]);
    tl.insert_full(series::PROBE_TEST_ACC, &acc).unwrap();
    tl.insert_full(series::N_CRIT_TEST, &nc).unwrap();
    let ann = PhaseAnnotation::new(PhaseKind::Clean, Events::default(), &tl.epochs).unwrap();
    let sig = signature_flags(&tl, &ann, &Thresholds::default()).representation_degradation;
    assert!(sig.fired);
    assert!(sig.magnitude.unwrap() > 0.0);
    let e = sig.epoch.unwrap() / 10;
    assert!((19..35).contains(&e));

    let mut tl2 = timeline(&vec![1.0; n], &vec![0.5; n]);
    let up: Vec<f64> = (0..n).map(|e| e as f64).collect();
    tl2.insert_full(series::PROBE_TEST_ACC, &up).unwrap();
    tl2.insert_full(series::N_CRIT_TEST, &up).unwrap();
    assert!(!signature_flags(&tl2, &ann, &Thresholds::default()).representation_degradation.fired);
}

#[test]
fn consistency_extremes() {
    let x: Vec<f64> = (0..30).map(|i| ((i as f64) * 0.4).sin() + 0.05 * i as f64).collect();
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert_eq!(consistency(&x, &x).unwrap(), 1.0);
    assert_eq!(consistency(&x, &neg).unwrap(), -1.0);
    assert!(consistency(&x, &[2.0; 30]).is_err());
    assert!(consistency(&x[..3], &x[..3]).is_err());
}

/// Smoothing spline by a dense solve at every λ, with the penalty built from
/// second divided differences and the tridiagonal band on unit knots.
#[test]
fn spline_matches_dense_gcv() {
    let y: Vec<f64> = (0..25).map(|i| ((i as f64) * 0.7).cos() + 0.3 * ((i * 7919 % 13) as f64 / 13.0 - 0.5)).collect();
    let n = y.len();
    let mut q = DMatrix::zeros(n, n - 2);
    let mut r = DMatrix::zeros(n - 2, n - 2);
    for c in 0..n - 2 {
        q[(c, c)] = 1.0;
        q[(c + 1, c)] = -2.0;
        q[(c + 2, c)] = 1.0;
        r[(c, c)] = 2.0 / 3.0;
        if c + 1 < n - 2 {
            r[(c, c + 1)] = 1.0 / 6.0;
            r[(c + 1, c)] = 1.0 / 6.0;
        }
    }
    let k = &q * r.try_inverse().unwrap() * q.transpose();
    let yv = DVector::from_row_slice(&y);
    let mut best = (f64::INFINITY, 0.0, DVector::zeros(n));
    for lam in gcv_grid() {
        let s = (DMatrix::identity(n, n) + &k * lam).try_inverse().unwrap();
        let fit = &s * &yv;
        let rss = (&fit - &yv).norm_squared();
        let gcv = n as f64 * rss / (n as f64 - s.trace()).powi(2);
        if gcv < best.0 {
            best = (gcv, lam, fit);
        }
    }
    let (fit, lam) = smoothing_spline(&y).unwrap();
    assert_eq!(lam, best.1);
    for (a, b) in fit.iter().zip(best.2.iter()) {
        assert!((a - b).abs() < 1e-9);
    }
}

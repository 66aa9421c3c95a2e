use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rrd_core::probes::*;
use rrd_core::tasks::{modadd_dataset, permcomp_dataset};
use rrd_core::{EmbeddingMatrix, LabelVector};

fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingMatrix {
    EmbeddingMatrix::new(Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))).unwrap()
}

#[test]
fn one_hot_features_are_fit_exactly() {
    let y: Vec<u32> = (0..40).map(|i| (i % 4) as u32).collect();
    let x = Array2::from_shape_fn((40, 4), |(i, j)| if y[i] as usize == j { 1.0 } else { 0.0 });
    let (x, y) = (EmbeddingMatrix::new(x).unwrap(), LabelVector::new(y, 4).unwrap());
    let cfg = ProbeConfig { weight_decay: 0.0, learning_rate: 1e-2, ..ProbeConfig::default() };
    let r = fit_probe((&x, &y), (&x, &y), &cfg, 3).unwrap();
    assert_eq!(r.train_accuracy, 1.0);
    // a class never seen in training cannot be predicted
    let (tr, te) = transfer_split(y.len(), TRANSFER_SPLIT_SEED);
    let seen: Vec<usize> = tr.iter().map(|&i| y.get(i)).collect();
    let reachable = te.iter().filter(|&&i| seen.contains(&y.get(i))).count() as f64 / te.len() as f64;
    assert!(reachable > 0.8);
    assert_eq!(r.test_accuracy, reachable);
}

#[test]
fn random_labels_give_chance_accuracy() {
    let mut total = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xtr = gaussian(&mut rng, 100, 64);
        let xte = gaussian(&mut rng, 100, 64);
        let ytr = LabelVector::new((0..100).map(|_| rng.random_range(0..10)).collect(), 10).unwrap();
        let yte = LabelVector::new((0..100).map(|_| rng.random_range(0..10)).collect(), 10).unwrap();
        total += fit_probe((&xtr, &ytr), (&xte, &yte), &ProbeConfig::default(), seed).unwrap().test_accuracy;
    }
    let mean = total / 20.0;
    assert!((mean - 0.1).abs() <= 0.05, "{mean}");
}

#[test]
fn fits_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = gaussian(&mut rng, 50, 8);
    let y = LabelVector::new((0..50).map(|i| (i % 3) as u32).collect(), 3).unwrap();
    let a = fit_probe((&x, &y), (&x, &y), &ProbeConfig::default(), 9).unwrap();
    let b = fit_probe((&x, &y), (&x, &y), &ProbeConfig::default(), 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn signed_coordinate_permutations_commute_with_the_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = gaussian(&mut rng, 60, 5);
    let y = LabelVector::new((0..60).map(|i| ((i * 7) % 3) as u32).collect(), 3).unwrap();
    let init = Array2::from_shape_fn((3, 5), |_| 0.3 * rng.sample::<f64, _>(StandardNormal));
    let perm = [3usize, 0, 4, 1, 2];
    let sign = [1.0, -1.0, -1.0, 1.0, 1.0];
    let xs = Array2::from_shape_fn((60, 5), |(i, j)| sign[j] * x.view()[[i, perm[j]]]);
    let is = Array2::from_shape_fn((3, 5), |(c, j)| sign[j] * init[[c, perm[j]]]);
    let xs = EmbeddingMatrix::new(xs).unwrap();
    let a = fit_probe_from((&x, &y), (&x, &y), &ProbeConfig::default(), init).unwrap();
    let b = fit_probe_from((&xs, &y), (&xs, &y), &ProbeConfig::default(), is).unwrap();
    assert!((a.train_accuracy - b.train_accuracy).abs() < 1e-6);
    assert!((a.final_loss - b.final_loss).abs() < 1e-9);
}

#[test]
fn heavy_weight_decay_shrinks_the_readout() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = gaussian(&mut rng, 80, 10);
    let y = LabelVector::new((0..80).map(|i| (i % 2) as u32).collect(), 2).unwrap();
    let norm = |wd: f64| {
        let cfg = ProbeConfig { weight_decay: wd, ..ProbeConfig::default() };
        let r = fit_probe((&x, &y), (&x, &y), &cfg, 1).unwrap();
        r.weights.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let (loose, tight) = (norm(0.0), norm(900.0));
    assert!(tight < 0.05 * loose, "{tight} vs {loose}");
}

#[test]
fn transfer_labels_cover_whole_tasks() {
    let ds = modadd_dataset(7, 0.5, 0).unwrap();
    let y = transfer_labels(TransferTask::ModaddDiff, &ds.inputs).unwrap();
    assert_eq!(y.len(), 21);
    // a > b, so the difference is never 0
    assert!(y.as_slice().iter().all(|&v| v != 0));
    let ds = permcomp_dataset(3, 0.5, 0).unwrap();
    let y = transfer_labels(TransferTask::PermcompInverse, &ds.inputs).unwrap();
    // each group element appears n! times over all ordered pairs
    assert!(y.histogram().iter().all(|&c| c == 6));
}

#[test]
fn transfer_probe_on_identity_features() {
    let ds = modadd_dataset(13, 0.5, 0).unwrap();
    let y = transfer_labels(TransferTask::ModaddDiff, &ds.inputs).unwrap();
    let x = Array2::from_shape_fn((y.len(), 13), |(i, j)| if y.get(i) == j { 1.0 } else { 0.0 });
    let x = EmbeddingMatrix::new(x).unwrap();
    let cfg = ProbeConfig { weight_decay: 0.0, learning_rate: 1e-2, ..ProbeConfig::default() };
    let r = transfer_probe(&x, &ds.inputs, TransferTask::ModaddDiff, &cfg, TRANSFER_SPLIT_SEED, 0).unwrap();
    // a class never seen in training cannot be predicted
    let (tr, te) = transfer_split(y.len(), TRANSFER_SPLIT_SEED);
    let seen: Vec<usize> = tr.iter().map(|&i| y.get(i)).collect();
    let reachable = te.iter().filter(|&&i| seen.contains(&y.get(i))).count() as f64 / te.len() as f64;
    assert!(reachable > 0.8);
    assert_eq!(r.test_accuracy, reachable);
}

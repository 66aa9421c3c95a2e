use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::manifolds::LabelVector;
use crate::rng::{domain, substream};

/// Fixed label corruption of a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseInjection {
    pub fraction: f64,
    /// Sample indices (into the full dataset) whose label was replaced.
    pub corrupted_indices: Vec<usize>,
    /// Full-length labels with the corruption applied; test labels are untouched.
    pub noisy_labels: LabelVector,
}

/// Corrupt exactly `floor(fraction * n_train)` training labels to a uniformly
/// random different class.
pub fn inject_label_noise(ds: &Dataset, fraction: f64, seed: u64) -> Result<NoiseInjection> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("noise fraction must lie in [0, 1], got {fraction}")));
    }
    let classes = ds.classes();
    let count = (fraction * ds.n_train() as f64).floor() as usize;
    let mut rng = substream(seed, domain::NOISE, 0);
    let mut corrupted: Vec<usize> =
        rand::seq::index::sample(&mut rng, ds.n_train(), count).into_iter().map(|k| ds.train[k]).collect();
    corrupted.sort_unstable();

    let mut labels = ds.labels.as_slice().to_vec();
    for &i in &corrupted {
        let clean = labels[i] as usize;
        // uniform over the C-1 wrong classes
        let mut wrong = rng.random_range(0..classes - 1);
        if wrong >= clean {
            wrong += 1;
        }
        labels[i] = wrong as u32;
    }
    Ok(NoiseInjection { fraction, corrupted_indices: corrupted, noisy_labels: LabelVector::new(labels, classes)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{modadd_dataset, sparse_parity_dataset};

    #[test]
    fn zero_noise_is_identity() {
        let ds = modadd_dataset(31, 0.5, 0).unwrap();
        let ni = inject_label_noise(&ds, 0.0, 1).unwrap();
        assert!(ni.corrupted_indices.is_empty());
        assert_eq!(ni.noisy_labels, ds.labels);
    }

    #[test]
    fn exact_count_and_all_differ() {
        let ds = sparse_parity_dataset(20, 3, 1000, 50, 0).unwrap();
        let ni = inject_label_noise(&ds, 0.2, 7).unwrap();
        assert_eq!(ni.corrupted_indices.len(), 200);
        let train: std::collections::HashSet<usize> = ds.train.iter().copied().collect();
        for i in 0..ds.labels.len() {
            let changed = ni.noisy_labels.get(i) != ds.labels.get(i);
            assert_eq!(changed, ni.corrupted_indices.binary_search(&i).is_ok());
            if changed {
                assert!(train.contains(&i));
            }
        }
    }

    #[test]
    fn full_binary_noise_flips_everything() {
        let ds = sparse_parity_dataset(20, 3, 100, 50, 0).unwrap();
        let ni = inject_label_noise(&ds, 1.0, 7).unwrap();
        for &i in &ds.train {
            assert_eq!(ni.noisy_labels.get(i), 1 - ds.labels.get(i));
        }
        for &i in &ds.test {
            assert_eq!(ni.noisy_labels.get(i), ds.labels.get(i));
        }
    }

    #[test]
    fn rejects_bad_fraction() {
        let ds = modadd_dataset(7, 0.5, 0).unwrap();
        assert!(inject_label_noise(&ds, 1.1, 0).is_err());
    }
}

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{Dataset, Inputs, Provenance};
use crate::error::{Error, Result};
use crate::manifolds::LabelVector;
use crate::rng::{domain, substream};

const MAX_PERM_N: usize = 6;

fn check_fraction(frac: f64) -> Result<()> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction must lie in (0, 1), got {frac}")));
    }
    Ok(())
}

/// Seeded train/test partition; both halves are returned sorted.
fn split(n: usize, n_train: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(seed, domain::DATA_SPLIT, 0));
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn train_count(n: usize, frac: f64) -> Result<usize> {
    check_fraction(frac)?;
    let k = (frac * n as f64).round() as usize;
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("train fraction {frac} leaves an empty split of {n} samples")));
    }
    Ok(k)
}

/// `(a + b) mod p` over all pairs with `a > b`.
pub fn modadd_dataset(p: usize, train_fraction: f64, seed: u64) -> Result<Dataset> {
    let n = p * p.saturating_sub(1) / 2;
    let k = train_count(n, train_fraction)?;
    modadd_dataset_with_count(p, k, seed)
}

pub fn modadd_dataset_with_count(p: usize, n_train: usize, seed: u64) -> Result<Dataset> {
    if p < 3 {
        return Err(Error::InvalidArgument(format!("modulus must be >= 3, got {p}")));
    }
    let mut pairs = Vec::with_capacity(p * (p - 1) / 2);
    let mut labels = Vec::with_capacity(pairs.capacity());
    for a in 1..p {
        for b in 0..a {
            pairs.push((a as u32, b as u32));
            labels.push(((a + b) % p) as u32);
        }
    }
    let n = pairs.len();
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidArgument(format!("n_train {n_train} out of range for {n} samples")));
    }
    let (train, test) = split(n, n_train, seed);
    Ok(Dataset {
        inputs: Inputs::Pairs { pairs, vocab: p },
        labels: LabelVector::new(labels, p)?,
        train,
        test,
        provenance: Provenance {
            task: "modadd".into(),
            params: vec![("p".into(), p as f64), ("n_train".into(), n_train as f64)],
            seed,
        },
    })
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// The `idx`-th permutation of `0..n` in lexicographic order.
pub fn permutation(n: usize, mut idx: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let f = factorial(i);
        out.push(pool.remove(idx / f));
        idx %= f;
    }
    out
}

/// Lexicographic rank of a permutation of `0..n`.
pub fn perm_index(perm: &[usize]) -> usize {
    let n = perm.len();
    let mut rank = 0;
    for i in 0..n {
        let smaller = perm[i + 1..].iter().filter(|&&v| v < perm[i]).count();
        rank += smaller * factorial(n - 1 - i);
    }
    rank
}

/// `(σ∘τ)(i) = σ(τ(i))`.
pub fn perm_compose(sigma: &[usize], tau: &[usize]) -> Vec<usize> {
    tau.iter().map(|&t| sigma[t]).collect()
}

pub fn perm_inverse(sigma: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; sigma.len()];
    for (i, &s) in sigma.iter().enumerate() {
        inv[s] = i;
    }
    inv
}

/// Composition `σ∘τ` over all ordered pairs of `S_n`, lexicographic indexing.
///
/// Sample `σ·n! + τ` holds the pair `(σ, τ)`.
pub fn permcomp_dataset(n: usize, train_fraction: f64, seed: u64) -> Result<Dataset> {
    if !(2..=MAX_PERM_N).contains(&n) {
        return Err(Error::InvalidArgument(format!("permutation size must lie in [2, {MAX_PERM_N}], got {n}")));
    }
    let g = factorial(n);
    let k = train_count(g * g, train_fraction)?;
    permcomp_dataset_with_count(n, k, seed)
}

pub fn permcomp_dataset_with_count(n: usize, n_train: usize, seed: u64) -> Result<Dataset> {
    if !(2..=MAX_PERM_N).contains(&n) {
        return Err(Error::InvalidArgument(format!("permutation size must lie in [2, {MAX_PERM_N}], got {n}")));
    }
    let g = factorial(n);
    let perms: Vec<Vec<usize>> = (0..g).map(|i| permutation(n, i)).collect();
    let mut pairs = Vec::with_capacity(g * g);
    let mut labels = Vec::with_capacity(g * g);
    for (s, sigma) in perms.iter().enumerate() {
        for (t, tau) in perms.iter().enumerate() {
            pairs.push((s as u32, t as u32));
            labels.push(perm_index(&perm_compose(sigma, tau)) as u32);
        }
    }
    if n_train == 0 || n_train >= g * g {
        return Err(Error::InvalidArgument(format!("n_train {n_train} out of range for {} samples", g * g)));
    }
    let (train, test) = split(g * g, n_train, seed);
    Ok(Dataset {
        inputs: Inputs::Pairs { pairs, vocab: g },
        labels: LabelVector::new(labels, g)?,
        train,
        test,
        provenance: Provenance {
            task: "permcomp".into(),
            params: vec![("n".into(), n as f64), ("n_train".into(), n_train as f64)],
            seed,
        },
    })
}

/// Parity of a hidden `k`-subset of `n` ±1 bits; label 1 for product +1, else 0.
///
/// The first `n_train` rows form the train split, the rest the test split.
pub fn sparse_parity_dataset(n: usize, k: usize, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidArgument("both splits must be non-empty".into()));
    }
    let mut support = rand::seq::index::sample(&mut substream(seed, domain::DATA_DRAW, 0), n, k).into_vec();
    support.sort_unstable();
    let total = n_train + n_test;
    let mut rng = substream(seed, domain::DATA_DRAW, 1);
    let x = Array2::from_shape_fn((total, n), |_| if rng.random::<bool>() { 1.0 } else { -1.0 });
    let labels: Vec<u32> =
        x.rows().into_iter().map(|row| u32::from(support.iter().map(|&i| row[i]).product::<f64>() > 0.0)).collect();
    let mut params = vec![
        ("n".into(), n as f64),
        ("k".into(), k as f64),
        ("n_train".into(), n_train as f64),
        ("n_test".into(), n_test as f64),
    ];
    params.extend(support.iter().map(|&s| ("support".to_string(), s as f64)));
    Ok(Dataset {
        inputs: Inputs::Dense(x),
        labels: LabelVector::new(labels, 2)?,
        train: (0..n_train).collect(),
        test: (n_train..total).collect(),
        provenance: Provenance { task: "sparse_parity".into(), params, seed },
    })
}

/// Hidden support of a sparse parity dataset.
pub fn parity_support(ds: &Dataset) -> Vec<usize> {
    ds.provenance.params.iter().filter(|(k, _)| k == "support").map(|(_, v)| *v as usize).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn modadd_sizes() {
        let ds = modadd_dataset(113, 0.5, 0).unwrap();
        assert_eq!(ds.labels.len(), 6328);
        assert_eq!(ds.classes(), 113);
        assert_eq!(ds.n_train(), 3164);
        assert_eq!(modadd_dataset(113, 0.6, 0).unwrap().n_train(), 3797);
    }

    #[test]
    fn modadd_labels_and_histogram() {
        let ds = modadd_dataset(5, 0.5, 0).unwrap();
        let Inputs::Pairs { pairs, .. } = &ds.inputs else { panic!() };
        let i = pairs.iter().position(|&p| p == (3, 2)).unwrap();
        assert_eq!(ds.labels.get(i), 0);

        let ds = modadd_dataset(113, 0.5, 3).unwrap();
        let mut hist = vec![0usize; 113];
        let Inputs::Pairs { pairs, .. } = &ds.inputs else { panic!() };
        for &(a, b) in pairs {
            assert!(a > b);
            hist[((a + b) % 113) as usize] += 1;
        }
        assert_eq!(hist, ds.labels.histogram());
    }

    #[test]
    fn splits_partition() {
        let ds = modadd_dataset(31, 0.5, 9).unwrap();
        let mut all: Vec<usize> = ds.train.iter().chain(&ds.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.labels.len()).collect::<Vec<_>>());
        assert!(modadd_dataset(31, 1.5, 0).is_err());
        assert!(modadd_dataset(2, 0.5, 0).is_err());
    }

    #[test]
    fn permutations_roundtrip() {
        for i in 0..120 {
            assert_eq!(perm_index(&permutation(5, i)), i);
        }
        assert_eq!(permutation(3, 0), vec![0, 1, 2]);
        assert_eq!(permutation(3, 5), vec![2, 1, 0]);
    }

    #[test]
    fn permcomp_sizes_and_inverse() {
        let ds = permcomp_dataset(5, 0.75, 0).unwrap();
        assert_eq!(ds.labels.len(), 14400);
        assert_eq!(ds.classes(), 120);
        assert_eq!(ds.n_train(), 10800);
        assert_eq!(permcomp_dataset_with_count(5, 6000, 0).unwrap().n_train(), 6000);
        let Inputs::Pairs { pairs, .. } = &ds.inputs else { panic!() };
        for s in 0..120 {
            let inv = perm_index(&perm_inverse(&permutation(5, s)));
            let i = s * 120 + inv;
            assert_eq!(pairs[i], (s as u32, inv as u32));
            assert_eq!(ds.labels.get(i), 0);
        }
        assert!(permcomp_dataset(9, 0.5, 0).is_err());
    }

    #[test]
    fn parity_all_ones_is_positive() {
        let ds = sparse_parity_dataset(40, 3, 1200, 200, 0).unwrap();
        assert_eq!(ds.n_train(), 1200);
        let Inputs::Dense(x) = &ds.inputs else { panic!() };
        let support = parity_support(&ds);
        assert_eq!(support.len(), 3);
        for (row, &l) in x.rows().into_iter().zip(ds.labels.as_slice()) {
            let prod: f64 = support.iter().map(|&i| row[i]).product();
            assert_eq!(l, u32::from(prod > 0.0));
            if row.iter().all(|&v| v > 0.0) {
                assert_eq!(l, 1);
            }
        }
    }

    #[test]
    fn generators_are_pure() {
        assert_eq!(modadd_dataset(31, 0.5, 4).unwrap(), modadd_dataset(31, 0.5, 4).unwrap());
        assert_eq!(sparse_parity_dataset(10, 3, 20, 5, 1).unwrap(), sparse_parity_dataset(10, 3, 20, 5, 1).unwrap());
        assert_ne!(modadd_dataset(31, 0.5, 4).unwrap().train, modadd_dataset(31, 0.5, 5).unwrap().train);
    }

    proptest! {
        #[test]
        fn parity_bit_flips(seed in any::<u64>(), bit in 0usize..12) {
            let ds = sparse_parity_dataset(12, 3, 8, 1, seed).unwrap();
            let support = parity_support(&ds);
            let Inputs::Dense(x) = &ds.inputs else { unreachable!() };
            let label = |row: ndarray::ArrayView1<f64>| support.iter().map(|&i| row[i]).product::<f64>() > 0.0;
            for r in 0..x.nrows() {
                let mut row = x.row(r).to_owned();
                let before = label(row.view());
                row[bit] = -row[bit];
                let after = label(row.view());
                prop_assert_eq!(before != after, support.contains(&bit));
            }
        }
    }
}

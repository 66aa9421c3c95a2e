//! Seeded random streams.
//!
//! Every Monte-Carlo sample and every generator draws from its own ChaCha
//! stream keyed by `(seed, domain, index)`, so results never depend on the
//! order in which workers pick up samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep unrelated consumers of the same user seed apart.
pub mod domain {
    pub const SUBSAMPLE: u64 = 0x5355_4253;
    pub const GLUE_SAMPLE: u64 = 0x474c_5545;
    pub const DICHOTOMY: u64 = 0x4449_4348;
    pub const PROJECTION: u64 = 0x5052_4f4a;
    pub const DATA_SPLIT: u64 = 0x5350_4c54;
    pub const DATA_DRAW: u64 = 0x4452_4157;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const INIT: u64 = 0x494e_4954;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const PROBE: u64 = 0x5052_4f42;
    pub const GRADCHECK: u64 = 0x4752_4144;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, domain, index)`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix(seed ^ splitmix(domain));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Derive a child seed, e.g. one per repeat or per run in a sweep.
pub fn child_seed(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(domain)) ^ index)
}

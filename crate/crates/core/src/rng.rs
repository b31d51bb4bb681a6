//! Counter-based seeding: every independent random stream is derived from the
//! master seed and a stream key, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with a sequence of stream coordinates.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    key.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(seed: u64, key: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, key))
}

/// Stream tags, kept distinct so unrelated draws never share a stream.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const ANOMALY_LABEL: u64 = 2;
    pub const INITIAL_EDGES: u64 = 3;
    pub const STEP: u64 = 4;
    pub const INJECT: u64 = 5;
    pub const FOLDS: u64 = 6;
    pub const MEMBERSHIP: u64 = 7;
}

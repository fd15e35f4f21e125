//! Counter-based seed derivation.
//!
//! Every random stream in the crate is keyed by a master seed plus a path of
//! counters (run, subject, trial, ...), so parallel scheduling never changes
//! which numbers a given cell sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `master` with each counter in `path`, order-sensitive.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, path))
}

// Stream tags keep distinct uses of the same counters apart.
pub(crate) const TAG_TRACK: u64 = 1;
pub(crate) const TAG_FEATURES: u64 = 2;
pub(crate) const TAG_NOISE: u64 = 3;
pub(crate) const TAG_MEANS: u64 = 4;
pub(crate) const TAG_BASELINE: u64 = 5;
pub(crate) const TAG_INIT: u64 = 6;

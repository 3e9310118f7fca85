//! Seed plumbing. Every stochastic operation takes an explicit seed; parallel
//! or repeated work derives disjoint ChaCha streams from it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `(seed, stream)`. Distinct streams never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds from parent seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a labelled sub-task.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix64(seed ^ mix64(label))
}

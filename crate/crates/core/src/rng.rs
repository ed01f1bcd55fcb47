//! Seed derivation so that parallel work is independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG type used throughout the crate.
pub type DetRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of indices (e.g. `[repeat, fold]` or `[tree]`).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0xA5A5_A5A5))))
}

pub fn rng_for(base: u64, path: &[u64]) -> DetRng {
    DetRng::seed_from_u64(derive_seed(base, path))
}

//! Seed derivation. Every random object in the crate is keyed by a hash of a
//! master seed and a stable identifier, so results never depend on the order
//! in which replicas, vertices or clocks are visited.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of two words.
#[inline]
pub fn combine(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b).rotate_left(23))
}

/// Seed of replica `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    combine(combine(master, 0x5EED), index)
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Uniform in [0, 1) from the top 53 bits.
#[inline]
pub fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

//! Seeding helpers.
//!
//! Every stochastic operation in this crate takes an explicit 64-bit seed;
//! independent streams are derived by mixing a base seed with integer tags,
//! so a trial's noise realization is reproducible and method-independent.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Deterministic seed derivation: splitmix64 over the base seed and tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = base ^ 0x9e37_79b9_7f4a_7c15;
    for &t in tags {
        state = state.wrapping_add(t).wrapping_add(0x9e37_79b9_7f4a_7c15);
        state = splitmix(state);
    }
    splitmix(state)
}

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The crate-wide generator, seeded explicitly.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Circularly symmetric complex Gaussian samples with total per-sample
/// variance `variance` (split evenly between real and imaginary parts).
pub fn complex_gaussian(count: usize, variance: f64, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    if variance == 0.0 {
        return vec![Complex64::new(0.0, 0.0); count];
    }
    let normal = Normal::new(0.0, (variance / 2.0).sqrt()).expect("valid std dev");
    (0..count)
        .map(|_| Complex64::new(normal.sample(rng), normal.sample(rng)))
        .collect()
}

/// Uniform integer in `[0, bound)`.
pub fn uniform_index(bound: usize, rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(0..bound)
}

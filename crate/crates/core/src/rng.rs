//! Deterministic random number generation.
//!
//! All stochastic routines take a caller-supplied generator seeded from a
//! master seed. Independent streams (chains, replications, restarts) use
//! [`derived_rng`], which sets the ChaCha stream counter, so concurrent runs
//! produce results independent of scheduling order.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Generator used throughout the crate.
pub type Rng64 = ChaCha12Rng;

/// Root generator for a master seed.
pub fn master_rng(seed: u64) -> Rng64 {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Counter-derived independent stream: same master seed, distinct stream index.
pub fn derived_rng(seed: u64, stream: u64) -> Rng64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream.into());
    rng
}

/// Standard normal deviate via Box-Muller.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Standard complex normal: independent N(0,1) real and imaginary parts.
pub fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(standard_normal(rng), standard_normal(rng))
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(values: &mut [T], rng: &mut impl Rng) {
    for i in (1..values.len()).rev() {
        let j = rng.random_range(0..=i);
        values.swap(i, j);
    }
}

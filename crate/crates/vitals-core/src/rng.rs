//! Seeded random number helpers.
//!
//! Everything stochastic in the workspace (synthetic scenes, weight init,
//! window sampling, noise) draws from a ChaCha8 stream seeded explicitly, so
//! runs are reproducible bit-for-bit. `SplitMix64` is a tiny generator used
//! only inside tests where hauling in the full stream cipher is overkill.

use alloc::vec::Vec;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG used by all library-level sampling.
pub type Rng = ChaCha8Rng;

/// Create the workspace-standard RNG from a bare u64 seed.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent child stream, e.g. one per clip or per layer.
/// Different `label` values give unrelated streams for the same base seed.
pub fn child(seed: u64, label: u64) -> Rng {
    // splitmix the pair so (seed, label) and (seed+1, label-1) don't collide
    let mut s = SplitMix64::new(seed ^ label.rotate_left(32));
    s.next_u64();
    seeded(s.next_u64())
}

/// Uniform draw in [0, 1).
pub fn uniform(rng: &mut Rng) -> f64 {
    // 53 random mantissa bits
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in [lo, hi).
pub fn uniform_in(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Standard normal draw (Box-Muller).
pub fn gaussian(rng: &mut Rng) -> f64 {
    // u1 in (0, 1] so the log is finite
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// Vector of standard normal draws.
pub fn gaussian_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// Minimal splittable generator for test fixtures.
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

//! Seeded randomness helpers.
//!
//! Everything random in the crate flows through a `ChaCha8Rng` so that runs
//! are bitwise reproducible given a seed.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream from a base seed and a stream label.
/// Splits e.g. initialization, per-epoch sampling and probes apart.
pub fn substream(seed: u64, label: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Standard-normal draw via Box-Muller (works without `std`).
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, len: usize, sigma: f64) -> Vec<f64> {
    (0..len).map(|_| sigma * normal(rng)).collect()
}

/// Xavier/Glorot uniform initialization for a `rows x cols` weight matrix,
/// returned flattened row-major.
pub fn xavier_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let bound = math::sqrt(6.0 / (rows + cols) as f64);
    (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect()
}

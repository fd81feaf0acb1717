//! Seeded random streams.
//!
//! Every Monte Carlo path `i` under master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`. Streams are
//! independent and results do not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

/// The generator for path (or sample) `index` under `master`.
pub fn path_rng(master: u64, index: u64) -> PathRng {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(index);
    r
}

/// Derive an independent master seed for a named sub-experiment.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(master ^ 0x9e37_79b9_7f4a_7c15);
    r.set_stream(tag.wrapping_add(1 << 63));
    r.random()
}

/// Uniform draw in `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>()
}

/// Index `i` with `cum[i-1] <= u * total < cum[i]`, where `cum` is a
/// nondecreasing cumulative weight vector ending at `total`.
#[inline]
pub fn sample_cumulative(cum: &[f64], u: f64) -> usize {
    let target = u * cum[cum.len() - 1];
    match cum.iter().position(|&c| target < c) {
        Some(i) => i,
        None => cum.iter().rposition(|&c| c > 0.0).unwrap_or(cum.len() - 1),
    }
}

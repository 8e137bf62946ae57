//! Deterministic seed splitting.
//!
//! Every random draw in the toolkit comes from a ChaCha8 stream keyed by a
//! user seed and a short list of tags (trace identity, capture index, purpose).
//! ChaCha is counter based, so streams for different tags are independent and
//! the same tags always reproduce the same samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Complex;

/// Purpose tags keep streams for different consumers apart.
pub mod tag {
    pub const SYMBOLS: u64 = 0x5359_4d42;
    pub const NOISE_TX: u64 = 0x4e54_5800;
    pub const NOISE_RX: u64 = 0x4e52_5800;
    pub const LINE_PHASE: u64 = 0x4c49_4e45;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds tags into a single 64-bit key.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// A ChaCha8 generator for `(seed, tags)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(derive(seed, tags));
    rng
}

/// Circular complex Gaussian samples with `E|z|² = variance`.
pub fn complex_gaussian(rng: &mut ChaCha8Rng, n: usize, variance: f64) -> alloc::vec::Vec<Complex> {
    let sigma = libm::sqrt(variance / 2.0);
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(sigma * re, sigma * im)
        })
        .collect()
}

/// Stable 64-bit identity of an `f64`, for use as a tag.
#[inline]
pub fn f64_tag(x: f64) -> u64 {
    // fold -0.0 onto 0.0
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

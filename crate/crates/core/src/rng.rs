//! Deterministic random streams.
//!
//! Every random draw in the simulator comes from a stream addressed by a
//! root seed and a path of integers (trial, purpose, frame, ...), so results
//! do not depend on scheduling or thread count.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SimRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `seed` and the hierarchical `path`.
pub fn stream(seed: u64, path: &[u64]) -> SimRng {
    let mut h = splitmix(seed);
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    SimRng::seed_from_u64(h)
}

/// Derive a child seed (for APIs that take a plain `u64`).
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ 0xa076_1d64_78bd_642f);
    for &p in path {
        h = splitmix(h ^ p);
    }
    h
}

pub fn normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Circularly-symmetric complex Gaussian with variance `var`.
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    Complex64::new(s * normal(rng), s * normal(rng))
}

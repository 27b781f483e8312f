//! Counter-based pseudo-random numbers: every draw is a pure function of `(seed, counter)`,
//! so ensembles are reproducible bit-for-bit on every platform and in any evaluation order.

use crate::math::{cos, log, sin, sqrt, TWO_PI};

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn hash2(seed: u64, counter: u64) -> u64 {
    mix64(mix64(seed) ^ counter.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Uniform in the open interval `(0, 1)`.
#[inline]
pub fn uniform(seed: u64, counter: u64) -> f64 {
    ((hash2(seed, counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Two independent standard normals (Box-Muller) for one counter.
pub fn normal_pair(seed: u64, counter: u64) -> (f64, f64) {
    let u1 = uniform(seed, counter.wrapping_mul(2));
    let u2 = uniform(seed, counter.wrapping_mul(2).wrapping_add(1));
    let r = sqrt(-2.0 * log(u1));
    let a = TWO_PI * u2;
    (r * cos(a), r * sin(a))
}

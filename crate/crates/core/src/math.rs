//! Float functions routed through `libm` so results do not depend on the platform C library.

pub(crate) use core::f64::consts::PI;
pub(crate) use libm::{cos, exp, floor, log, pow, sin, sqrt};

pub(crate) const TWO_PI: f64 = 2.0 * PI;

/// Wraps `x` into `[-1/2, 1/2)`.
#[inline]
pub(crate) fn wrap(x: f64) -> f64 {
    let y = x - floor(x + 0.5);
    if y >= 0.5 {
        y - 1.0
    } else {
        y
    }
}

//! Periodic cubic Lagrange interpolation on the uniform torus grid (fourth order).

use crate::math::floor;
use crate::spectral::Grid;

#[inline]
fn weights(t: f64) -> [f64; 4] {
    let tm1 = t - 1.0;
    let tm2 = t - 2.0;
    let tp1 = t + 1.0;
    [
        -t * tm1 * tm2 / 6.0,
        tp1 * tm1 * tm2 / 2.0,
        -tp1 * t * tm2 / 2.0,
        tp1 * t * tm1 / 6.0,
    ]
}

/// Stencil start index (wrapped) and weights along one axis.
#[inline]
fn axis_stencil(n: usize, x: f64) -> ([usize; 4], [f64; 4]) {
    let s = (x + 0.5) * n as f64;
    let i0 = floor(s);
    let t = s - i0;
    let base = (i0 as i64 - 1).rem_euclid(n as i64) as usize;
    let mask = n - 1;
    (
        [base, (base + 1) & mask, (base + 2) & mask, (base + 3) & mask],
        weights(t),
    )
}

pub(crate) fn cubic(grid: Grid, values: &[f64], p: &[f64]) -> f64 {
    let n = grid.n();
    match grid.dim() {
        2 => {
            let (ix, wx) = axis_stencil(n, p[0]);
            let (iy, wy) = axis_stencil(n, p[1]);
            let mut acc = 0.0;
            for a in 0..4 {
                let row = &values[ix[a] * n..ix[a] * n + n];
                let mut r = 0.0;
                for b in 0..4 {
                    r += wy[b] * row[iy[b]];
                }
                acc += wx[a] * r;
            }
            acc
        }
        _ => {
            let (ix, wx) = axis_stencil(n, p[0]);
            let (iy, wy) = axis_stencil(n, p[1]);
            let (iz, wz) = axis_stencil(n, p[2]);
            let mut acc = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    let off = (ix[a] * n + iy[b]) * n;
                    let mut r = 0.0;
                    for c in 0..4 {
                        r += wz[c] * values[off + iz[c]];
                    }
                    acc += wx[a] * wy[b] * r;
                }
            }
            acc
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{sin, TWO_PI};
    use crate::spectral::ScalarField;

    #[test]
    fn reproduces_nodes_and_cubics() {
        let w = weights(0.0);
        assert_eq!(w, [0.0, 1.0, 0.0, 0.0]);
        // Exact on cubic polynomials in the local coordinate.
        for &t in &[0.1, 0.5, 0.9] {
            let w = weights(t);
            let f = |s: f64| 1.0 + 2.0 * s - s * s + 0.5 * s * s * s;
            let v: f64 = (0..4).map(|j| w[j] * f(j as f64 - 1.0)).sum();
            assert!((v - f(t)).abs() < 1e-13);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |n: usize| {
            let g = Grid::new(2, n).unwrap();
            let f = ScalarField::from_fn(g, |x| sin(TWO_PI * x[0]) * sin(TWO_PI * x[1]));
            let mut e: f64 = 0.0;
            for i in 0..50 {
                let p = [0.37 * i as f64 % 1.0 - 0.5, 0.61 * i as f64 % 1.0 - 0.5];
                let exact = sin(TWO_PI * p[0]) * sin(TWO_PI * p[1]);
                e = e.max((cubic(g, f.values(), &p) - exact).abs());
            }
            e
        };
        let ratio = err(32) / err(64);
        assert!(ratio > 12.0, "ratio {ratio}");
    }
}

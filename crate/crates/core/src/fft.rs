//! Radix-2 complex FFT over power-of-two lengths and its separable extension to
//! `n^dim` row-major arrays.

use alloc::vec::Vec;
use num_complex::Complex64;

use crate::math::{cos, sin, TWO_PI};

#[derive(Debug, Clone)]
pub(crate) struct Fft1d {
    n: usize,
    /// `exp(-2πi k / n)` for `k < n/2`.
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl Fft1d {
    pub(crate) fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two() && n >= 2);
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -TWO_PI * k as f64 / n as f64;
                Complex64::new(cos(a), sin(a))
            })
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| i.reverse_bits() >> (usize::BITS - bits))
            .collect();
        Self {
            n,
            twiddles,
            bitrev,
        }
    }

    /// Unnormalized in-place transform; `inverse` flips the exponent sign.
    pub(crate) fn process(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(data.len(), n);
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                data.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let step = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let w = self.twiddles[k * step];
                    let w = if inverse { w.conj() } else { w };
                    let a = data[start + k];
                    let b = data[start + k + half] * w;
                    data[start + k] = a + b;
                    data[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
    }
}

/// Separable transform over all axes of an `n^dim` row-major array.
#[derive(Debug, Clone)]
pub(crate) struct FftNd {
    dim: usize,
    n: usize,
    line: Fft1d,
}

impl FftNd {
    pub(crate) fn new(dim: usize, n: usize) -> Self {
        Self {
            dim,
            n,
            line: Fft1d::new(n),
        }
    }

    pub(crate) fn process(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let total = n.pow(self.dim as u32);
        debug_assert_eq!(data.len(), total);
        // Last axis is contiguous.
        for row in data.chunks_exact_mut(n) {
            self.line.process(row, inverse);
        }
        let mut scratch = alloc::vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..self.dim - 1 {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let block = stride * n;
            for base in (0..total).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (i, s) in scratch.iter_mut().enumerate() {
                        *s = data[start + i * stride];
                    }
                    self.line.process(&mut scratch, inverse);
                    for (i, s) in scratch.iter().enumerate() {
                        data[start + i * stride] = *s;
                    }
                }
            }
        }
    }
}

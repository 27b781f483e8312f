//! Grids, real fields on the unit torus `[-1/2, 1/2)^d` and their Fourier coefficients.
//!
//! Convention: `ĉ(k) = (1/N) Σ_x f(x) e^{-2πi k·x}` over the grid points, so `ĉ(0)` is the
//! mean and the Laplacian has symbol `-4π²|k|²`. Coefficients are stored in FFT order: the
//! array index `j` along an axis holds wavenumber `j` for `j ≤ n/2` and `j - n` otherwise.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::math::{pow, sqrt, PI, TWO_PI};

pub const MIN_N: usize = 16;
pub const MAX_N: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    n: usize,
}

/// Validating constructor, same as [`Grid::new`].
pub fn make_grid(dim: usize, n: usize) -> Result<Grid> {
    Grid::new(dim, n)
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        if !(MIN_N..=MAX_N).contains(&n) {
            return Err(Error::GridSizeOutOfRange(n));
        }
        Ok(Self { dim, n })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of points, `n^dim`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of grid index `i` along any axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -0.5 + i as f64 / self.n as f64
    }

    /// Signed wavenumber stored at array index `j`.
    #[inline]
    pub fn wavenumber(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Array index holding wavenumber `k` (taken modulo `n`).
    #[inline]
    pub fn mode_index(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Per-axis indices of a flat row-major index (axis 0 slowest). Unused slots are 0.
    #[inline]
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rem % self.n;
            rem /= self.n;
        }
        out
    }

    #[inline]
    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().take(self.dim).fold(0, |acc, &i| acc * self.n + i)
    }

    /// Physical location of a flat index.
    #[inline]
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let mut p = [0.0; 3];
        for axis in 0..self.dim {
            p[axis] = self.coord(idx[axis]);
        }
        p
    }

    /// Integer wavevector stored at a flat index.
    #[inline]
    pub fn wavevector(&self, flat: usize) -> [i64; 3] {
        let idx = self.unflatten(flat);
        let mut k = [0; 3];
        for axis in 0..self.dim {
            k[axis] = self.wavenumber(idx[axis]);
        }
        k
    }

    /// Flat index of `-k` given the flat index of `k`.
    #[inline]
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let idx = self.unflatten(flat);
        let mut out = 0;
        for &i in idx.iter().take(self.dim) {
            out = out * self.n + (self.n - i) % self.n;
        }
        out
    }

    /// `|k|²` at a flat index.
    #[inline]
    pub fn k_squared(&self, flat: usize) -> f64 {
        let k = self.wavevector(flat);
        k.iter().map(|&c| (c * c) as f64).sum()
    }

    fn parity(&self, flat: usize) -> bool {
        let idx = self.unflatten(flat);
        idx.iter().sum::<usize>() % 2 == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f` at every grid point; the closure sees a `dim`-long coordinate slice.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                f(&p[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Grid quadrature of the field (unit volume, so this is also `∫f`).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// `self - other`, rejecting fields on different grids.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Grid quadrature of `self * other`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s / self.values.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn new(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, coeffs: Vec<Complex64>) -> Self {
        Self { grid, coeffs }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    fn flat_of(&self, k: &[i64]) -> usize {
        let g = self.grid;
        k.iter()
            .take(g.dim())
            .fold(0, |acc, &kj| acc * g.n() + g.mode_index(kj))
    }

    /// Coefficient of wavevector `k` (components taken modulo `n`).
    pub fn get(&self, k: &[i64]) -> Complex64 {
        self.coeffs[self.flat_of(k)]
    }

    pub fn set(&mut self, k: &[i64], value: Complex64) {
        let i = self.flat_of(k);
        self.coeffs[i] = value;
    }

    /// `ĉ(0)`, the field mean.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Largest `|ĉ(-k) - conj ĉ(k)|`.
    pub fn symmetry_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[self.grid.conjugate_index(i)] - self.coeffs[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// `Σ_k |ĉ(k)|²`, equal to the grid mean of `f²` by Parseval.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Homogeneous `Ḣ^s` norm over `k ≠ 0`.
    pub fn sobolev_norm(&self, s: f64, conv: NormConvention) -> f64 {
        let scale = match conv {
            NormConvention::Integer => 1.0,
            NormConvention::Physical => TWO_PI,
        };
        let mut acc = 0.0;
        for (i, c) in self.coeffs.iter().enumerate().skip(1) {
            let k2 = self.grid.k_squared(i) * scale * scale;
            acc += weight(k2, s) * c.norm_sqr();
        }
        sqrt(acc)
    }
}

/// `(k²)^s` with cheap paths for the exponents used in hot loops.
#[inline]
fn weight(k2: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else if s == 1.0 {
        k2
    } else if s == -1.0 {
        1.0 / k2
    } else if s == 2.0 {
        k2 * k2
    } else {
        pow(k2, s)
    }
}

/// Whether Sobolev weights include the `2π` of the period-one torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormConvention {
    /// Weight `|k|^{2s}` over integer wavevectors.
    Integer,
    /// Weight `(2π|k|)^{2s}`, so `Ḣ¹` equals `‖∇f‖_{L²}`.
    Physical,
}

/// Cached FFT tables for one grid, with the grid-offset phase applied.
#[derive(Debug, Clone)]
pub(crate) struct Plan {
    grid: Grid,
    fft: FftNd,
    odd: Vec<bool>,
}

impl Plan {
    pub(crate) fn new(grid: Grid) -> Self {
        Self {
            grid,
            fft: FftNd::new(grid.dim(), grid.n()),
            odd: (0..grid.len()).map(|i| grid.parity(i)).collect(),
        }
    }

    #[inline]
    pub(crate) fn grid(&self) -> Grid {
        self.grid
    }

    fn phase(&self, data: &mut [Complex64]) {
        for (c, &odd) in data.iter_mut().zip(&self.odd) {
            if odd {
                *c = -*c;
            }
        }
    }

    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let inv = 1.0 / values.len() as f64;
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v * inv, 0.0)).collect();
        self.fft.process(&mut data, false);
        self.phase(&mut data);
        data
    }

    /// Transforms two real arrays with one complex FFT.
    pub(crate) fn forward_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let inv = 1.0 / a.len() as f64;
        let mut z: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x * inv, y * inv))
            .collect();
        self.fft.process(&mut z, false);
        self.phase(&mut z);
        let mut fa = Vec::with_capacity(z.len());
        let mut fb = Vec::with_capacity(z.len());
        for i in 0..z.len() {
            let zc = z[self.grid.conjugate_index(i)].conj();
            fa.push((z[i] + zc) * 0.5);
            let d = z[i] - zc;
            fb.push(Complex64::new(d.im * 0.5, -d.re * 0.5));
        }
        (fa, fb)
    }

    /// Inverse transform without a symmetry check; the imaginary part is discarded.
    pub(crate) fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.phase(&mut data);
        self.fft.process(&mut data, true);
        data.into_iter().map(|c| c.re).collect()
    }

    /// Inverts two conjugate-symmetric spectra with one complex FFT.
    pub(crate) fn inverse_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let mut data: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| x + Complex64::new(-y.im, y.re))
            .collect();
        self.phase(&mut data);
        self.fft.process(&mut data, true);
        data.into_iter().map(|c| (c.re, c.im)).unzip()
    }
}

/// Forward transform normalized so that `ĉ(0)` is the mean.
pub fn to_spectral(f: &ScalarField) -> SpectralCoeffs {
    let plan = Plan::new(f.grid);
    SpectralCoeffs::from_vec_unchecked(f.grid, plan.forward(&f.values))
}

/// Inverse transform; rejects coefficients that do not describe a real field.
pub fn to_physical(c: &SpectralCoeffs) -> Result<ScalarField> {
    let scale = c.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let defect = c.symmetry_defect();
    if defect > 1e-9 * scale {
        return Err(Error::AsymmetricCoefficients { defect });
    }
    let values = Plan::new(c.grid).inverse(&c.coeffs);
    ScalarField::new(c.grid, values)
}

/// `(-Δ)⁻¹` on the mean-zero part; the `k = 0` coefficient is set to zero.
pub fn invert_laplacian(c: &SpectralCoeffs) -> SpectralCoeffs {
    let g = c.grid;
    let mut out = c.clone();
    out.coeffs[0] = Complex64::new(0.0, 0.0);
    for i in 1..g.len() {
        out.coeffs[i] /= 4.0 * PI * PI * g.k_squared(i);
    }
    out
}

/// Spectral Laplacian, symbol `-4π²|k|²`.
pub fn laplacian(c: &SpectralCoeffs) -> SpectralCoeffs {
    let g = c.grid;
    let mut out = c.clone();
    for (i, z) in out.coeffs.iter_mut().enumerate() {
        *z *= -4.0 * PI * PI * g.k_squared(i);
    }
    out
}

/// Multiplies by `2πi k_axis`. The Nyquist mode is zeroed because `i·(n/2)` has no real
/// partner on an even grid.
pub(crate) fn derivative(c: &[Complex64], grid: Grid, axis: usize) -> Vec<Complex64> {
    let half = grid.n() as i64 / 2;
    c.iter()
        .enumerate()
        .map(|(i, z)| {
            let k = grid.wavevector(i)[axis];
            if k == half {
                Complex64::new(0.0, 0.0)
            } else {
                *z * Complex64::new(0.0, TWO_PI * k as f64)
            }
        })
        .collect()
}

/// Components `2πi k_j ĉ(k)`, `j = 0..dim`.
pub fn spectral_gradient(c: &SpectralCoeffs) -> Vec<SpectralCoeffs> {
    (0..c.grid.dim())
        .map(|axis| SpectralCoeffs::from_vec_unchecked(c.grid, derivative(&c.coeffs, c.grid, axis)))
        .collect()
}

/// `Σ_j 2πi k_j v̂_j(k)`.
pub fn divergence(v: &[SpectralCoeffs]) -> Result<SpectralCoeffs> {
    let grid = v.first().ok_or(Error::param("v", "empty vector field"))?.grid;
    if v.len() != grid.dim() {
        return Err(Error::param("v", "component count must equal the dimension"));
    }
    if v.iter().any(|c| c.grid != grid) {
        return Err(Error::GridMismatch);
    }
    let mut out = SpectralCoeffs::zeros(grid);
    for (axis, comp) in v.iter().enumerate() {
        for (o, d) in out.coeffs.iter_mut().zip(derivative(&comp.coeffs, grid, axis)) {
            *o += d;
        }
    }
    Ok(out)
}

/// Homogeneous Sobolev norm of a field, `s ∈ [-2, 4]`; the mean never contributes.
pub fn sobolev_norm(f: &ScalarField, s: f64, conv: NormConvention) -> Result<f64> {
    if !(-2.0..=4.0).contains(&s) {
        return Err(Error::param("s", "Sobolev index must lie in [-2, 4]"));
    }
    Ok(to_spectral(f).sobolev_norm(s, conv))
}

/// `L^p` norm by uniform-grid quadrature; `p = ∞` is the grid maximum of `|f|`.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::param("p", "exponent must lie in [1, ∞]"));
    }
    Ok(lp_of(&f.values, p))
}

pub(crate) fn lp_of(values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| f64::max(m, v.abs()));
    }
    let n = values.len() as f64;
    if p == 2.0 {
        return sqrt(values.iter().map(|v| v * v).sum::<f64>() / n);
    }
    // Rescale by the max so large exponents do not overflow.
    let m = values.iter().fold(0.0, |m, v| f64::max(m, v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().map(|v| pow(v.abs() / m, p)).sum::<f64>() / n;
    m * pow(s, 1.0 / p)
}

/// Keeps modes with Euclidean `|k| ≤ N`.
pub fn project_low_modes(c: &SpectralCoeffs, big_n: usize) -> SpectralCoeffs {
    let g = c.grid;
    let cutoff = (big_n * big_n) as f64;
    let mut out = c.clone();
    for (i, z) in out.coeffs.iter_mut().enumerate() {
        if g.k_squared(i) > cutoff {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    out
}

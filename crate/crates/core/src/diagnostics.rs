//! Monitored functionals, thresholds, residuals, detectors and inequality ratios.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math::{log, pow, sqrt, PI};
use crate::spectral::{
    lp_of, spectral_gradient, to_physical, to_spectral, Grid, NormConvention, Plan, ScalarField,
};
use crate::solver::SimState;

/// One time sample of the monitored quantities.
///
/// `tail_fraction` and `linf` feed the detector and are not part of the CSV schema.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub l2_dev: f64,
    /// `‖∇ρ‖_{L²}`.
    pub h1: f64,
    /// `‖ρ‖_{Ḣ¹}` with [`NormConvention::Integer`] weights (CSV column `h1_paper`).
    pub h1_paper: f64,
    pub hm1: f64,
    pub linf_dev: f64,
    pub min_val: f64,
    /// `‖P_N(ρ - ρ̄)‖_{L²}`.
    pub pn_low: f64,
    pub criterion_integral: f64,
    pub dt_used: f64,
    /// Share of the deviation energy in modes with `|k| > n/3`.
    pub tail_fraction: f64,
    /// `max |ρ|`.
    pub linf: f64,
}

pub fn record(state: &SimState, low_mode_n: usize) -> DiagnosticsRecord {
    record_with_dt(state, low_mode_n, 0.0)
}

pub(crate) fn record_with_dt(state: &SimState, low_mode_n: usize, dt_used: f64) -> DiagnosticsRecord {
    let grid = state.grid();
    let c = state.rho_hat().coeffs();
    let tail_k2 = {
        let k = (grid.n() / 3) as f64;
        k * k
    };
    let low_k2 = (low_mode_n * low_mode_n) as f64;
    let (mut l2, mut h1p, mut hm1, mut low, mut tail) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, z) in c.iter().enumerate().skip(1) {
        let e = z.norm_sqr();
        let k2 = grid.k_squared(i);
        l2 += e;
        h1p += k2 * e;
        hm1 += e / k2;
        if k2 <= low_k2 {
            low += e;
        }
        if k2 > tail_k2 {
            tail += e;
        }
    }
    let mean = state.mean();
    let v = state.rho().values();
    let (mut min_val, mut linf, mut linf_dev) = (f64::INFINITY, 0.0f64, 0.0f64);
    for &x in v {
        min_val = min_val.min(x);
        linf = linf.max(x.abs());
        linf_dev = linf_dev.max((x - mean).abs());
    }
    DiagnosticsRecord {
        t: state.t(),
        mass: c[0].re,
        l2_dev: sqrt(l2),
        h1: 2.0 * PI * sqrt(h1p),
        h1_paper: sqrt(h1p),
        hm1: sqrt(hm1),
        linf_dev,
        min_val,
        pn_low: sqrt(low),
        criterion_integral: state.criterion_integral(),
        dt_used,
        // A fluctuation at round-off level has no meaningful spectral shape.
        tail_fraction: if sqrt(l2) > TAIL_NOISE_FLOOR * linf { tail / l2 } else { 0.0 },
        linf,
    }
}

/// Relative size of `‖ρ - ρ̄‖` below which the tail fraction is reported as zero.
pub const TAIL_NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub criterion_cap: f64,
    pub h1_cap: f64,
    pub tail_cap: f64,
    pub neg_cap: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            criterion_cap: 1e4,
            h1_cap: 1e6,
            tail_cap: 0.1,
            neg_cap: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorClause {
    /// Time integral of `‖ρ - ρ̄‖^{4/(4-d)}` exceeded its cap.
    CriterionIntegral,
    H1,
    /// Resolution exhausted: too much energy near the grid cutoff.
    SpectralTail,
    Negativity,
}

impl DetectorClause {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorClause::CriterionIntegral => "criterion_integral",
            DetectorClause::H1 => "h1",
            DetectorClause::SpectralTail => "spectral_tail",
            DetectorClause::Negativity => "negativity",
        }
    }
}

impl fmt::Display for DetectorClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// First clause that fires on a single record, in declaration order.
pub fn detect_clause(r: &DiagnosticsRecord, cfg: &DetectorConfig) -> Option<DetectorClause> {
    if r.criterion_integral > cfg.criterion_cap {
        Some(DetectorClause::CriterionIntegral)
    } else if r.h1 > cfg.h1_cap {
        Some(DetectorClause::H1)
    } else if r.tail_fraction > cfg.tail_cap {
        Some(DetectorClause::SpectralTail)
    } else if r.min_val < -cfg.neg_cap * r.linf {
        Some(DetectorClause::Negativity)
    } else {
        None
    }
}

/// Earliest record in `history` on which some clause fires.
pub fn blowup_detect_clause(history: &[DiagnosticsRecord], cfg: &DetectorConfig) -> Option<(usize, DetectorClause)> {
    history
        .iter()
        .enumerate()
        .find_map(|(i, r)| detect_clause(r, cfg).map(|c| (i, c)))
}

pub fn blowup_detect(history: &[DiagnosticsRecord], cfg: &DetectorConfig) -> bool {
    blowup_detect_clause(history, cfg).is_some()
}

/// Inputs of the absorbing-set thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub b: f64,
    pub rho_bar: f64,
    pub c0: f64,
    pub c1: f64,
    pub d: usize,
}

impl ThresholdParams {
    fn exponent(&self) -> f64 {
        let d = self.d as f64;
        (12.0 - 2.0 * d) / (4.0 - d)
    }
}

/// `B₁ = sqrt(C₀ B^{(12-2d)/(4-d)} + 2ρ̄B²)`.
pub fn b1_threshold(p: &ThresholdParams) -> f64 {
    sqrt(p.c0 * pow(p.b, p.exponent()) + 2.0 * p.rho_bar * p.b * p.b)
}

/// `C₁ min(1, 1/ρ̄, B^{-4/(4-d)})`.
pub fn safe_window(p: &ThresholdParams) -> f64 {
    let d = p.d as f64;
    let inv_rho = if p.rho_bar > 0.0 { 1.0 / p.rho_bar } else { f64::INFINITY };
    p.c1 * f64::min(1.0, inv_rho).min(pow(p.b, -4.0 / (4.0 - d)))
}

/// Finite-difference form of the `L²` energy inequality between two nearby states.
///
/// `residual = d/dt ‖ρ-ρ̄‖² + ‖∇ρ‖² - 2ρ̄‖ρ-ρ̄‖²` with the last two terms averaged over the
/// pair; for the unadvected equation it equals `-‖∇ρ‖² + ∫(ρ-ρ̄)³`.
pub fn decay_residual(s0: &SimState, s1: &SimState, p: &ThresholdParams) -> (f64, f64) {
    let dt = s1.t() - s0.t();
    let (r0, r1) = (record(s0, 0), record(s1, 0));
    if !(dt > 0.0) {
        return (0.0, 0.0);
    }
    let ddt = (r1.l2_dev * r1.l2_dev - r0.l2_dev * r0.l2_dev) / dt;
    let h1sq = 0.5 * (r0.h1 * r0.h1 + r1.h1 * r1.h1);
    let l2sq = 0.5 * (r0.l2_dev * r0.l2_dev + r1.l2_dev * r1.l2_dev);
    let residual = ddt + h1sq - 2.0 * p.rho_bar * l2sq;
    let l2 = 0.5 * (r0.l2_dev + r1.l2_dev);
    let c0 = if l2 > 1e-12 { residual / pow(l2, p.exponent()) } else { 0.0 };
    (residual, c0)
}

/// Exact time derivative of `∫|x|²φρ` under the unadvected equation, and the leading
/// aggregation term `-(∫ρφ)²/(2π)`.
pub fn second_moment_rate(rho: &ScalarField, phi: &ScalarField, rho_bar: f64) -> Result<(f64, f64)> {
    let grid = rho.grid();
    if grid.dim() != 2 {
        return Err(Error::DimensionRequired {
            required: 2,
            got: grid.dim(),
        });
    }
    if phi.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let w = ScalarField::from_fn(grid, |x| x[0] * x[0] + x[1] * x[1]).map(|v| v);
    let w = ScalarField::from_vec_unchecked(
        grid,
        w.values().iter().zip(phi.values()).map(|(a, b)| a * b).collect(),
    );
    let plan = Plan::new(grid);
    let w_hat = to_spectral(&w);
    let lap_w = to_physical(&crate::spectral::laplacian(&w_hat))?;
    let grad_w: Vec<ScalarField> = spectral_gradient(&w_hat)
        .iter()
        .map(|c| ScalarField::from_vec_unchecked(grid, plan.inverse(c.coeffs())))
        .collect();
    // (-Δ)⁻¹ discards the mean, so subtracting ρ̄ only matters through rounding.
    let dev = rho.map(|v| v - rho_bar);
    let c_hat = crate::spectral::invert_laplacian(&to_spectral(&dev));
    let grad_c: Vec<ScalarField> = spectral_gradient(&c_hat)
        .iter()
        .map(|c| ScalarField::from_vec_unchecked(grid, plan.inverse(c.coeffs())))
        .collect();
    let n = grid.len() as f64;
    let mut diffusion = 0.0;
    let mut aggregation = 0.0;
    for i in 0..grid.len() {
        let r = rho.values()[i];
        diffusion += lap_w.values()[i] * r;
        aggregation += r * (grad_c[0].values()[i] * grad_w[0].values()[i] + grad_c[1].values()[i] * grad_w[1].values()[i]);
    }
    let rate = (diffusion + aggregation) / n;
    let mass_phi = rho.inner(phi)?;
    Ok((rate, -mass_phi * mass_phi / (2.0 * PI)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub level: u32,
    /// Row-major `2^level × 2^level` block means; block `(i, j)` covers
    /// `[-1/2 + i/2^level, -1/2 + (i+1)/2^level) × [...)`.
    pub cell_averages: Vec<f64>,
    pub mixedness: f64,
    pub hm1: f64,
}

pub fn cell_mixedness(f: &ScalarField, level: u32) -> Result<MixingReport> {
    let grid = f.grid();
    if grid.dim() != 2 {
        return Err(Error::DimensionRequired {
            required: 2,
            got: grid.dim(),
        });
    }
    let cells = 1usize << level;
    if level > 20 || cells * 4 > grid.n() {
        return Err(Error::param("n_level", "2^level must not exceed n/4"));
    }
    let n = grid.n();
    let side = n / cells;
    let mut sums = vec![0.0; cells * cells];
    for i in 0..n {
        for j in 0..n {
            sums[(i / side) * cells + j / side] += f.values()[i * n + j];
        }
    }
    let per = (side * side) as f64;
    let cell_averages: Vec<f64> = sums.into_iter().map(|s| s / per).collect();
    let mean = f.mean();
    let dev_inf = f.values().iter().fold(0.0, |m, v| f64::max(m, (v - mean).abs()));
    let max_avg = cell_averages.iter().fold(0.0, |m, v| f64::max(m, (v - mean).abs()));
    let mixedness = if dev_inf > 0.0 { max_avg / dev_inf } else { 0.0 };
    let hm1 = to_spectral(f).sobolev_norm(-1.0, NormConvention::Integer);
    Ok(MixingReport {
        level,
        cell_averages,
        mixedness,
        hm1,
    })
}

/// Negative-norm duality check: `‖f‖_{Ḣ⁻¹}` against `ε_eff ‖f‖_∞` with
/// `ε_eff = max(2^{-level}, mixedness)`. Returns `(hm1, rhs, hm1/rhs)`.
pub fn duality_bound_check(f: &ScalarField, level: u32) -> Result<(f64, f64, f64)> {
    let scale = lp_of(f.values(), f64::INFINITY);
    if f.mean().abs() > 1e-10 * scale.max(1e-300) {
        return Err(Error::param("f", "must be mean zero"));
    }
    let report = cell_mixedness(f, level)?;
    let eps = f64::max(pow(2.0, -(level as f64)), report.mixedness);
    let rhs = eps * scale;
    let ratio = if rhs > 0.0 { report.hm1 / rhs } else { 0.0 };
    Ok((report.hm1, rhs, ratio))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inequality {
    /// `‖D^m f‖_{L^p} ≤ C ‖f‖_{L²}^{1-a} ‖f‖_{Ḣⁿ}^a`, `a = (m - d/p + d/2)/n`.
    GagliardoNirenberg { m: u32, p: f64, n_ord: u32 },
    /// `‖f‖_{Ḣ^s} ≤ C ‖f‖_{Ḣ^{s+1}}^{(2s+d)/(2s+2+d)} ‖f‖_{L¹}^{2/(2s+2+d)}`.
    Nash { s: f64 },
    /// `‖v‖_{L^q} ≤ C ‖∇v‖_{L²}^a ‖v‖_{L^r}^{1-a}` for `v` vanishing somewhere.
    VanishingGn { q: f64, r: f64 },
    /// `‖f‖_{Ḣ^s} ≤ ‖f - f̄‖_{L²}^{1/(s+1)} ‖f‖_{Ḣ^{s+1}}^{s/(s+1)}`, constant one.
    SobolevInterp { s: f64 },
}

/// Interpolation exponent of [`Inequality::GagliardoNirenberg`], rejecting inadmissible combinations.
pub fn gn_exponent(d: usize, m: u32, p: f64, n_ord: u32) -> Result<f64> {
    if n_ord == 0 || m > n_ord {
        return Err(Error::InadmissibleExponents(format!(
            "need 0 <= m <= n with n >= 1 (m = {m}, n = {n_ord})"
        )));
    }
    if !(p >= 2.0) {
        return Err(Error::InadmissibleExponents(format!("need 2 <= p <= inf (p = {p})")));
    }
    let d = d as f64;
    let a = (m as f64 - d / p + d / 2.0) / n_ord as f64;
    if a > 1.0 + 1e-12 {
        return Err(Error::InadmissibleExponents(format!("a = {a} exceeds 1")));
    }
    if (a - 1.0).abs() <= 1e-12 && p.is_infinite() {
        return Err(Error::ExcludedCase("a = 1 is only allowed for 2 <= p < inf".into()));
    }
    Ok(a)
}

pub fn vanishing_gn_exponent(d: usize, q: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && q > r && q.is_finite()) {
        return Err(Error::InadmissibleExponents(format!("need 0 < r < q < inf (q = {q}, r = {r})")));
    }
    let denom = 1.0 / d as f64 - 0.5 + 1.0 / r;
    if !(denom > 0.0) {
        return Err(Error::InadmissibleExponents(format!("need 1/d - 1/2 + 1/r > 0 (got {denom})")));
    }
    let a = (1.0 / r - 1.0 / q) / denom;
    if a > 1.0 {
        return Err(Error::InadmissibleExponents(format!("a = {a} exceeds 1")));
    }
    Ok(a)
}

/// Empirical constant `LHS / RHS` of one inequality, norms without constants.
pub fn inequality_ratios(f: &ScalarField, which: Inequality) -> Result<f64> {
    let grid = f.grid();
    let d = grid.dim();
    let c = to_spectral(f);
    let scale = lp_of(f.values(), f64::INFINITY);
    let mean_zero = c.mean().abs() <= 1e-10 * scale.max(1e-300);
    let ratio = |lhs: f64, rhs: f64| if rhs > 0.0 { lhs / rhs } else { 0.0 };
    match which {
        Inequality::GagliardoNirenberg { m, p, n_ord } => {
            let a = gn_exponent(d, m, p, n_ord)?;
            if !mean_zero {
                return Err(Error::param("f", "must be mean zero"));
            }
            let plan = Plan::new(grid);
            let mut lhs: f64 = 0.0;
            for axis in 0..d {
                let mut coeffs = c.coeffs().to_vec();
                for _ in 0..m {
                    coeffs = crate::spectral::derivative(&coeffs, grid, axis);
                }
                lhs = lhs.max(lp_of(&plan.inverse(&coeffs), p));
            }
            let l2 = c.sobolev_norm(0.0, NormConvention::Integer);
            let hn = c.sobolev_norm(n_ord as f64, NormConvention::Integer);
            Ok(ratio(lhs, pow(l2, 1.0 - a) * pow(hn, a)))
        }
        Inequality::Nash { s } => {
            if !mean_zero {
                return Err(Error::param("f", "must be mean zero"));
            }
            let dd = d as f64;
            let hs = c.sobolev_norm(s, NormConvention::Integer);
            let hs1 = c.sobolev_norm(s + 1.0, NormConvention::Integer);
            let l1 = lp_of(f.values(), 1.0);
            let e1 = (2.0 * s + dd) / (2.0 * s + 2.0 + dd);
            let e2 = 2.0 / (2.0 * s + 2.0 + dd);
            Ok(ratio(hs, pow(hs1, e1) * pow(l1, e2)))
        }
        Inequality::VanishingGn { q, r } => {
            let a = vanishing_gn_exponent(d, q, r)?;
            let (lo, hi) = (f.min(), f.max());
            if !(lo <= 0.0 && hi >= 0.0) {
                return Err(Error::param("f", "must vanish somewhere (no sign change found)"));
            }
            let grad = c.sobolev_norm(1.0, NormConvention::Physical);
            let lq = lp_of(f.values(), q);
            let lr = lp_of(f.values(), r);
            Ok(ratio(lq, pow(grad, a) * pow(lr, 1.0 - a)))
        }
        Inequality::SobolevInterp { s } => {
            let hs = c.sobolev_norm(s, NormConvention::Integer);
            let l2 = c.sobolev_norm(0.0, NormConvention::Integer);
            let hs1 = c.sobolev_norm(s + 1.0, NormConvention::Integer);
            Ok(ratio(hs, pow(l2, 1.0 / (s + 1.0)) * pow(hs1, s / (s + 1.0))))
        }
    }
}

/// `(linf_dev, C₄ B max(B, √ρ̄), linf_dev ≤ bound)`.
pub fn linf_bound_check(state: &SimState, b: f64, c4: f64) -> (f64, f64, bool) {
    let mean = state.mean();
    let linf_dev = state
        .rho()
        .values()
        .iter()
        .fold(0.0, |m, v| f64::max(m, (v - mean).abs()));
    let bound = c4 * b * f64::max(b, sqrt(mean.max(0.0)));
    (linf_dev, bound, linf_dev <= bound)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoserParams {
    /// `B` with `‖ρ - ρ̄‖_{L²} ≤ 2B` assumed on the run.
    pub b: f64,
    /// Universal constant `C ≥ 1` of the recursion.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoserReport {
    /// `‖ρ - ρ̄‖_{L^{2^j}}` for `j = 1..=levels`.
    pub norms: Vec<f64>,
    /// Recursive caps `Υ_j`.
    pub caps: Vec<f64>,
    pub linf_dev: f64,
}

pub const MAX_MOSER_LEVELS: u32 = 6;

pub fn moser_linf_iterate(state: &SimState, levels: u32, params: &MoserParams) -> Result<MoserReport> {
    if levels == 0 || levels > MAX_MOSER_LEVELS {
        return Err(Error::param("levels", "must lie in 1..=6"));
    }
    if !(params.c >= 1.0) {
        return Err(Error::param("C", "recursion constant must be at least 1"));
    }
    let mean = state.mean();
    let dev: Vec<f64> = state.rho().values().iter().map(|v| v - mean).collect();
    let norms = (1..=levels).map(|j| lp_of(&dev, pow(2.0, j as f64))).collect();
    let log_c = log(params.c);
    let log_rho = log(mean.max(1e-300)).max(0.0);
    let mut caps = vec![f64::max(2.0 * params.b, 1.0)];
    for n in 1..levels {
        let prev = log(caps[(n - 1) as usize]);
        let p = pow(2.0, (n + 1) as f64);
        let common = (n as f64 + 1.0) * core::f64::consts::LN_2 + log_c;
        let gamma = (p - 1.0) / (p - 2.0) * prev + common / p;
        let theta = prev + (common + log_rho) / p;
        caps.push(libm::exp(gamma.max(theta)));
    }
    Ok(MoserReport {
        norms,
        caps,
        linf_dev: lp_of(&dev, f64::INFINITY),
    })
}

/// Grid the report was computed on, for callers that log it.
pub fn grid_label(grid: Grid) -> alloc::string::String {
    format!("{}D n={}", grid.dim(), grid.n())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initdata::{gaussian_bump, radial_cutoff, random_smooth_field};
    use crate::math::{sin, TWO_PI};

    fn g2(n: usize) -> Grid {
        Grid::new(2, n).unwrap()
    }

    #[test]
    fn record_of_constant_and_single_mode() {
        let g = g2(32);
        let r = record(&SimState::new(ScalarField::constant(g, 2.0)), 1);
        assert_eq!((r.l2_dev, r.h1, r.hm1, r.linf_dev, r.pn_low), (0.0, 0.0, 0.0, 0.0, 0.0));
        let s = SimState::new(ScalarField::from_fn(g, |x| 1.0 + sin(TWO_PI * x[0])));
        let r = record(&s, 1);
        assert!((r.pn_low - sqrt(0.5)).abs() < 1e-14);
        assert!((r.l2_dev - sqrt(0.5)).abs() < 1e-14);
        assert!((r.hm1 - sqrt(0.5)).abs() < 1e-14);
        assert!((r.h1 - TWO_PI * sqrt(0.5)).abs() < 1e-12);
        assert!((r.mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interpolation_on_random_fields() {
        let g = g2(64);
        for seed in 0..100 {
            let f = random_smooth_field(g, seed, 2.5).unwrap();
            let r = record(&SimState::new(f), 4);
            assert!(r.l2_dev * r.l2_dev <= r.hm1 * r.h1_paper * (1.0 + 1e-10));
        }
    }

    #[test]
    fn thresholds() {
        let p = ThresholdParams { b: 1.0, rho_bar: 0.0, c0: 1.0, c1: 1.0, d: 2 };
        assert!((b1_threshold(&p) - 1.0).abs() < 1e-15);
        let p3 = ThresholdParams { b: 1.0, rho_bar: 1.0, c0: 1.0, c1: 1.0, d: 3 };
        assert!((b1_threshold(&p3) - sqrt(3.0)).abs() < 1e-15);
        let w = ThresholdParams { b: 2.0, rho_bar: 1.0, c0: 1.0, c1: 1.0, d: 2 };
        assert!((safe_window(&w) - 0.25).abs() < 1e-15);
        assert!((safe_window(&ThresholdParams { d: 3, ..w }) - 0.0625).abs() < 1e-15);
        let small = ThresholdParams { b: 0.5, rho_bar: 0.7, c0: 1.0, c1: 3.0, d: 2 };
        assert_eq!(safe_window(&small), 3.0);
        let base = b1_threshold(&ThresholdParams { b: 1.5, rho_bar: 2.0, c0: 1.0, c1: 1.0, d: 2 });
        assert!(b1_threshold(&ThresholdParams { b: 1.6, rho_bar: 2.0, c0: 1.0, c1: 1.0, d: 2 }) > base);
        assert!(b1_threshold(&ThresholdParams { b: 1.5, rho_bar: 2.1, c0: 1.0, c1: 1.0, d: 2 }) > base);
        assert!(b1_threshold(&ThresholdParams { b: 1.5, rho_bar: 2.0, c0: 1.1, c1: 1.0, d: 2 }) > base);
    }

    #[test]
    fn detector_clauses() {
        let g = g2(32);
        let r = record(&SimState::new(ScalarField::constant(g, 1.0)), 1);
        let cfg = DetectorConfig::default();
        assert!(!blowup_detect(&[r, r], &cfg));
        let mut bad = r;
        bad.h1 = 2e6;
        assert_eq!(detect_clause(&bad, &cfg), Some(DetectorClause::H1));
        let mut neg = r;
        neg.min_val = -0.01;
        assert_eq!(detect_clause(&neg, &cfg), Some(DetectorClause::Negativity));
        assert_eq!(blowup_detect_clause(&[r, neg], &cfg), Some((1, DetectorClause::Negativity)));
    }

    #[test]
    fn cell_mixedness_examples() {
        let g = g2(128);
        let c = cell_mixedness(&ScalarField::constant(g, 4.0), 2).unwrap();
        assert_eq!(c.mixedness, 0.0);
        let f = ScalarField::from_fn(g, |x| sin(TWO_PI * x[0]));
        let r = cell_mixedness(&f, 1).unwrap();
        // left-endpoint cell sums carry an O(h²) quadrature error
        assert!((r.mixedness - 2.0 / PI).abs() < 1e-3);
        assert!((r.cell_averages[0] + 2.0 / PI).abs() < 1e-3);
        assert!(cell_mixedness(&f, 6).is_err());
        assert!(cell_mixedness(&ScalarField::constant(Grid::new(3, 16).unwrap(), 1.0), 1).is_err());
    }

    #[test]
    fn block_aggregation() {
        let g = g2(64);
        let f = random_smooth_field(g, 2, 2.5).unwrap();
        for level in 2..=4u32 {
            let fine = cell_mixedness(&f, level).unwrap().cell_averages;
            let coarse = cell_mixedness(&f, level - 1).unwrap().cell_averages;
            let cf = 1usize << level;
            let cc = cf / 2;
            for i in 0..cc {
                for j in 0..cc {
                    let s = fine[(2 * i) * cf + 2 * j]
                        + fine[(2 * i) * cf + 2 * j + 1]
                        + fine[(2 * i + 1) * cf + 2 * j]
                        + fine[(2 * i + 1) * cf + 2 * j + 1];
                    assert!((0.25 * s - coarse[i * cc + j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn checkerboard_duality_ratio() {
        for (n, m) in [(128usize, 4u32), (128, 8), (256, 16)] {
            let g = g2(n);
            let f = ScalarField::from_fn(g, |x| sin(TWO_PI * m as f64 * x[0]) * sin(TWO_PI * m as f64 * x[1]));
            let (hm1, _, ratio) = duality_bound_check(&f, m.trailing_zeros()).unwrap();
            assert!((hm1 - 1.0 / (2.0 * sqrt(2.0) * m as f64)).abs() < 1e-12);
            assert!((ratio - 1.0 / (2.0 * sqrt(2.0))).abs() < 1e-10, "{ratio}");
        }
        let z = duality_bound_check(&ScalarField::constant(g2(32), 0.0), 1).unwrap();
        assert_eq!(z, (0.0, 0.0, 0.0));
    }

    #[test]
    fn gn_single_mode() {
        let f = ScalarField::from_fn(g2(64), |x| sin(TWO_PI * x[0]));
        let r = inequality_ratios(&f, Inequality::GagliardoNirenberg { m: 0, p: f64::INFINITY, n_ord: 2 }).unwrap();
        assert!((r - sqrt(2.0)).abs() < 1e-12, "{r}");
        assert!(matches!(
            inequality_ratios(&f, Inequality::GagliardoNirenberg { m: 0, p: f64::INFINITY, n_ord: 1 }),
            Err(Error::ExcludedCase(_))
        ));
        assert!(matches!(
            inequality_ratios(&f, Inequality::GagliardoNirenberg { m: 2, p: 2.0, n_ord: 1 }),
            Err(Error::InadmissibleExponents(_))
        ));
        assert!(vanishing_gn_exponent(2, 2.0, 3.0).is_err());
        assert!((vanishing_gn_exponent(2, 3.0, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ratios_are_homogeneous() {
        let f = random_smooth_field(g2(64), 5, 2.5).unwrap();
        let g = f.scaled(37.5);
        for w in [
            Inequality::GagliardoNirenberg { m: 1, p: 4.0, n_ord: 3 },
            Inequality::Nash { s: 1.0 },
            Inequality::VanishingGn { q: 3.0, r: 2.0 },
            Inequality::SobolevInterp { s: 2.0 },
        ] {
            let (a, b) = (inequality_ratios(&f, w).unwrap(), inequality_ratios(&g, w).unwrap());
            assert!((a - b).abs() <= 1e-10 * a, "{w:?}");
        }
    }

    #[test]
    fn decay_residual_examples() {
        let g = g2(32);
        let p = ThresholdParams { b: 1.0, rho_bar: 0.0, c0: 1.0, c1: 1.0, d: 2 };
        let c = SimState::new(ScalarField::constant(g, 1.0));
        assert_eq!(decay_residual(&c, &c, &p), (0.0, 0.0));
    }

    #[test]
    fn second_moment_signs() {
        let g = g2(128);
        let phi = radial_cutoff(g, 0.2).unwrap();
        let (rate, _) = second_moment_rate(&ScalarField::constant(g, 3.0), &phi, 3.0).unwrap();
        assert!(rate.abs() < 1e-10, "{rate}");
        let rho = gaussian_bump(g, 60.0, 0.03, &[0.0, 0.0]).unwrap();
        let (rate, leading) = second_moment_rate(&rho, &phi, 60.0).unwrap();
        assert!(rate < 0.0, "{rate}");
        assert!(leading < rate);
    }

    #[test]
    fn moser_sequence() {
        let g = g2(64);
        let s = SimState::new(ScalarField::from_fn(g, |x| 1.0 + 0.1 * sin(TWO_PI * x[0])));
        let r = moser_linf_iterate(&s, 6, &MoserParams { b: 1.0, c: 1.0 }).unwrap();
        for w in r.norms.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!((r.linf_dev - r.norms[5]) / r.linf_dev <= 0.05);
        let c = SimState::new(ScalarField::constant(g, 2.0));
        let r = moser_linf_iterate(&c, 3, &MoserParams { b: 1.0, c: 1.0 }).unwrap();
        assert!(r.norms.iter().all(|&v| v == 0.0));
        assert!(moser_linf_iterate(&c, 7, &MoserParams { b: 1.0, c: 1.0 }).is_err());
    }
}

//! Incompressible velocity fields on the torus.
//!
//! Every flow is, at each instant, a finite sum of plane waves `a sin(2π k·x + φ)` with
//! `a·k = 0`, so incompressibility holds mode by mode and mollification is a per-wave
//! multiplier. A constant velocity is the `k = 0` wave with `φ = π/2`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{cos, floor, sin, sqrt, PI, TWO_PI};
use crate::rng;
use crate::spectral::{derivative, Grid, Plan};

/// Finest mixer level accepted at construction; grids impose a tighter bound later.
pub const MAX_MIXER_LEVELS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Wave {
    pub(crate) a: [f64; 3],
    pub(crate) k: [i64; 3],
    pub(crate) phase: f64,
}

impl Wave {
    fn k2(&self) -> i64 {
        self.k.iter().map(|c| c * c).sum()
    }
}

/// Velocity at one point; only the first `dim` components are meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySample {
    pub components: [f64; 3],
    pub dim: usize,
}

impl VelocitySample {
    pub fn as_slice(&self) -> &[f64] {
        &self.components[..self.dim]
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowKind {
    Zero,
    Uniform {
        velocity: [f64; 3],
    },
    /// `(sin(2πm y + θ_j), 0)` on even intervals `[jT, (j+1)T)`, `(0, sin(2πm x + θ_j))` on odd
    /// ones; in 3D interval `j` moves component `j mod 3` along coordinate `(j+1) mod 3`.
    ShearAlternating {
        m: u32,
        t_sw: f64,
        phase_seed: u64,
    },
    /// Stream function `ψ = sin(2πm x) sin(2πm y) / (2πm)`, `u = (∂_y ψ, -∂_x ψ)`.
    Cellular {
        m: u32,
    },
    /// Dyadic cellular stages `1..=levels` with `‖∇u‖ = 1`; the schedule repeats after
    /// `levels · per_level_time`.
    MultiscaleMixer {
        levels: u32,
        per_level_time: f64,
    },
    Mollified {
        inner: Box<FlowSpec>,
        delta: f64,
        transform: BumpTransform,
    },
    Scaled {
        inner: Box<FlowSpec>,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    kind: FlowKind,
    lipschitz_bound: f64,
}

pub fn make_zero() -> FlowSpec {
    FlowSpec {
        kind: FlowKind::Zero,
        lipschitz_bound: 0.0,
    }
}

pub fn make_uniform(velocity: [f64; 3]) -> FlowSpec {
    FlowSpec {
        kind: FlowKind::Uniform { velocity },
        lipschitz_bound: 0.0,
    }
}

pub fn make_shear_alternating(m: u32, t_sw: f64, phase_seed: u64) -> Result<FlowSpec> {
    if m == 0 {
        return Err(Error::param("m", "wavenumber must be at least 1"));
    }
    if !(t_sw > 0.0 && t_sw.is_finite()) {
        return Err(Error::param("t_sw", "switching half-period must be positive"));
    }
    Ok(FlowSpec {
        kind: FlowKind::ShearAlternating { m, t_sw, phase_seed },
        lipschitz_bound: TWO_PI * m as f64,
    })
}

pub fn make_cellular(m: u32) -> Result<FlowSpec> {
    if m == 0 {
        return Err(Error::param("m", "wavenumber must be at least 1"));
    }
    Ok(FlowSpec {
        kind: FlowKind::Cellular { m },
        lipschitz_bound: TWO_PI * m as f64,
    })
}

pub fn make_multiscale_mixer(levels: u32, per_level_time: f64) -> Result<FlowSpec> {
    if levels == 0 || levels > MAX_MIXER_LEVELS {
        return Err(Error::param("levels", "must lie in 1..=8"));
    }
    if !(per_level_time > 0.0 && per_level_time.is_finite()) {
        return Err(Error::param("per_level_time", "must be positive"));
    }
    Ok(FlowSpec {
        kind: FlowKind::MultiscaleMixer {
            levels,
            per_level_time,
        },
        lipschitz_bound: 1.0,
    })
}

/// Convolution with the unit-mass bump `∝ (1 - |x|²/δ²)⁴` supported in `B_δ`.
pub fn mollify(flow: FlowSpec, delta: f64) -> Result<FlowSpec> {
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::param("delta", "mollification radius must lie in (0, 1/4)"));
    }
    let mut k2s = Vec::new();
    flow.collect_k2(&mut k2s);
    k2s.sort_unstable();
    k2s.dedup();
    let transform = BumpTransform::new(delta, &k2s);
    let lipschitz_bound = flow.lipschitz_bound;
    Ok(FlowSpec {
        kind: FlowKind::Mollified {
            inner: Box::new(flow),
            delta,
            transform,
        },
        lipschitz_bound,
    })
}

pub fn scale_amplitude(flow: FlowSpec, amplitude: f64) -> Result<FlowSpec> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::param("amplitude", "must be finite and nonnegative"));
    }
    let lipschitz_bound = flow.lipschitz_bound * amplitude;
    Ok(FlowSpec {
        kind: FlowKind::Scaled {
            inner: Box::new(flow),
            amplitude,
        },
        lipschitz_bound,
    })
}

impl FlowSpec {
    pub fn kind(&self) -> &FlowKind {
        &self.kind
    }

    /// Declared bound on `‖∇u(·, t)‖_∞` for all `t`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// True when the velocity vanishes identically.
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            FlowKind::Zero => true,
            FlowKind::Uniform { velocity } => velocity.iter().all(|&v| v == 0.0),
            FlowKind::Mollified { inner, .. } => inner.is_zero(),
            FlowKind::Scaled { inner, amplitude } => *amplitude == 0.0 || inner.is_zero(),
            _ => false,
        }
    }

    /// Rejects flows that cannot run on `grid`: the cellular family is 2D only, and mixer
    /// cells must span at least 8 grid points.
    pub fn check_grid(&self, grid: Grid) -> Result<()> {
        match &self.kind {
            FlowKind::Cellular { m } => {
                if grid.dim() != 2 {
                    return Err(Error::DimensionRequired {
                        required: 2,
                        got: grid.dim(),
                    });
                }
                if grid.n() < 8 * *m as usize {
                    return Err(Error::param("m", "cells narrower than 4 grid points"));
                }
                Ok(())
            }
            FlowKind::MultiscaleMixer { levels, .. } => {
                if grid.dim() != 2 {
                    return Err(Error::DimensionRequired {
                        required: 2,
                        got: grid.dim(),
                    });
                }
                if grid.n() >> levels < 8 {
                    return Err(Error::param(
                        "levels",
                        "finest cells would be thinner than 8 grid points",
                    ));
                }
                Ok(())
            }
            FlowKind::ShearAlternating { m, .. } => {
                if grid.n() < 4 * *m as usize {
                    return Err(Error::param("m", "shear wavenumber not resolved by the grid"));
                }
                Ok(())
            }
            FlowKind::Mollified { inner, .. } | FlowKind::Scaled { inner, .. } => inner.check_grid(grid),
            FlowKind::Zero | FlowKind::Uniform { .. } => Ok(()),
        }
    }

    /// Earliest time strictly after `t` at which the velocity jumps, if any.
    pub fn next_switch(&self, t: f64) -> Option<f64> {
        match &self.kind {
            FlowKind::ShearAlternating { t_sw, .. } => Some(next_multiple(t, *t_sw)),
            FlowKind::MultiscaleMixer { per_level_time, .. } => Some(next_multiple(t, 0.5 * per_level_time)),
            FlowKind::Mollified { inner, .. } => inner.next_switch(t),
            FlowKind::Scaled { inner, amplitude } => {
                if *amplitude == 0.0 {
                    None
                } else {
                    inner.next_switch(t)
                }
            }
            _ => None,
        }
    }

    /// Exact velocity at `x` (wrapped implicitly) and time `t`; `x.len()` sets the dimension.
    pub fn evaluate(&self, x: &[f64], t: f64) -> VelocitySample {
        let dim = x.len();
        eval_waves(&self.waves_at(t, dim), x)
    }

    fn collect_k2(&self, out: &mut Vec<i64>) {
        match &self.kind {
            FlowKind::Zero | FlowKind::Uniform { .. } => out.push(0),
            FlowKind::ShearAlternating { m, .. } => out.push((*m as i64).pow(2)),
            FlowKind::Cellular { m } => out.push(2 * (*m as i64).pow(2)),
            FlowKind::MultiscaleMixer { levels, .. } => {
                for level in 1..=*levels {
                    out.push(2 * (1i64 << (level - 1)).pow(2));
                }
            }
            FlowKind::Mollified { inner, .. } | FlowKind::Scaled { inner, .. } => inner.collect_k2(out),
        }
    }

    /// Plane-wave decomposition valid on the closed-left interval containing `t`.
    pub(crate) fn waves_at(&self, t: f64, dim: usize) -> Vec<Wave> {
        match &self.kind {
            FlowKind::Zero => Vec::new(),
            FlowKind::Uniform { velocity } => {
                let mut a = [0.0; 3];
                a[..dim].copy_from_slice(&velocity[..dim]);
                vec![Wave {
                    a,
                    k: [0; 3],
                    phase: 0.5 * PI,
                }]
            }
            FlowKind::ShearAlternating { m, t_sw, phase_seed } => {
                let j = interval_of(t, *t_sw);
                let moved = j.rem_euclid(dim as i64) as usize;
                let along = (moved + 1) % dim;
                let phase = if *phase_seed == 0 {
                    0.0
                } else {
                    TWO_PI * rng::uniform(*phase_seed, j as u64)
                };
                let mut a = [0.0; 3];
                a[moved] = 1.0;
                let mut k = [0; 3];
                k[along] = *m as i64;
                vec![Wave { a, k, phase }]
            }
            FlowKind::Cellular { m } => cellular_waves(*m as i64, 1.0, 0.0),
            FlowKind::MultiscaleMixer {
                levels,
                per_level_time,
            } => {
                let half = interval_of(t, 0.5 * per_level_time);
                let stage = half.div_euclid(2).rem_euclid(*levels as i64) as u32;
                let m = 1i64 << stage;
                let shift = if half.rem_euclid(2) == 0 { 0.0 } else { 0.25 / m as f64 };
                cellular_waves(m, 1.0 / (TWO_PI * m as f64), shift)
            }
            FlowKind::Mollified { inner, transform, .. } => {
                let mut w = inner.waves_at(t, dim);
                for wave in &mut w {
                    let f = transform.factor(wave.k2(), dim);
                    wave.a.iter_mut().for_each(|c| *c *= f);
                }
                w
            }
            FlowKind::Scaled { inner, amplitude } => {
                if *amplitude == 0.0 {
                    return Vec::new();
                }
                let mut w = inner.waves_at(t, dim);
                for wave in &mut w {
                    wave.a.iter_mut().for_each(|c| *c *= amplitude);
                }
                w
            }
        }
    }

    /// Velocity components sampled on every grid point at time `t`.
    pub fn sample_grid(&self, grid: Grid, t: f64) -> Vec<Vec<f64>> {
        sample_waves(&self.waves_at(t, grid.dim()), grid)
    }

    /// Grid maximum of `|u|` (componentwise max) at time `t`.
    pub fn max_speed(&self, grid: Grid, t: f64) -> f64 {
        self.sample_grid(grid, t)
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| f64::max(m, v.abs()))
    }
}

/// Index `j` of the closed-left interval `[j p, (j+1) p)` holding `t`, with the endpoints
/// computed exactly as [`next_multiple`] computes them.
fn interval_of(t: f64, period: f64) -> i64 {
    let mut j = floor(t / period) as i64;
    while (j + 1) as f64 * period <= t {
        j += 1;
    }
    while j as f64 * period > t {
        j -= 1;
    }
    j
}

fn next_multiple(t: f64, period: f64) -> f64 {
    (interval_of(t, period) + 1) as f64 * period
}

/// Cellular flow at wavenumber `m`, velocity scale `scale`, cells shifted by `(s, s)`.
fn cellular_waves(m: i64, scale: f64, s: f64) -> Vec<Wave> {
    // sin(2πmx)cos(2πmy) = ½[sin 2πm(x+y) + sin 2πm(x-y)], and similarly for v.
    let p_sum = -TWO_PI * m as f64 * 2.0 * s;
    vec![
        Wave {
            a: [0.5 * scale, -0.5 * scale, 0.0],
            k: [m, m, 0],
            phase: p_sum,
        },
        Wave {
            a: [0.5 * scale, 0.5 * scale, 0.0],
            k: [m, -m, 0],
            phase: 0.0,
        },
    ]
}

pub(crate) fn eval_waves(waves: &[Wave], x: &[f64]) -> VelocitySample {
    let dim = x.len();
    let mut components = [0.0; 3];
    for w in waves {
        let arg: f64 = (0..dim).map(|i| w.k[i] as f64 * x[i]).sum::<f64>();
        let s = sin(TWO_PI * arg + w.phase);
        for (c, a) in components.iter_mut().zip(&w.a).take(dim) {
            *c += a * s;
        }
    }
    VelocitySample { components, dim }
}

pub(crate) fn sample_waves(waves: &[Wave], grid: Grid) -> Vec<Vec<f64>> {
    let dim = grid.dim();
    let n = grid.n();
    let mut out = vec![vec![0.0; grid.len()]; dim];
    for w in waves {
        if w.a[..dim].iter().all(|&a| a == 0.0) {
            continue;
        }
        // sin(2π k·x + φ) factorizes over the axes through complex exponentials; a 1D table
        // per axis keeps this to one multiply per point instead of a libm call.
        let tables: Vec<Vec<(f64, f64)>> = (0..dim)
            .map(|axis| {
                (0..n)
                    .map(|i| {
                        let th = TWO_PI * w.k[axis] as f64 * grid.coord(i);
                        (cos(th), sin(th))
                    })
                    .collect()
            })
            .collect();
        let (c0, s0) = (cos(w.phase), sin(w.phase));
        for flat in 0..grid.len() {
            let idx = grid.unflatten(flat);
            let (mut re, mut im) = (c0, s0);
            for axis in 0..dim {
                let (c, s) = tables[axis][idx[axis]];
                let nre = re * c - im * s;
                im = re * s + im * c;
                re = nre;
            }
            for (comp, a) in out.iter_mut().zip(&w.a) {
                comp[flat] += a * im;
            }
        }
    }
    out
}

/// Grid maximum over points and matrix entries of the spectral velocity gradient at `t`.
pub fn lipschitz_seminorm(flow: &FlowSpec, t: f64, grid: Grid) -> f64 {
    let u = flow.sample_grid(grid, t);
    let plan = Plan::new(grid);
    let mut best: f64 = 0.0;
    for comp in &u {
        let c = plan.forward(comp);
        for axis in 0..grid.dim() {
            let d = plan.inverse(&derivative(&c, grid, axis));
            best = d.iter().fold(best, |m, v| m.max(v.abs()));
        }
    }
    best
}

/// Grid maximum of the spectral divergence of the velocity at `t`.
pub fn divergence_residual(flow: &FlowSpec, t: f64, grid: Grid) -> f64 {
    let u = flow.sample_grid(grid, t);
    let plan = Plan::new(grid);
    let mut div = vec![num_complex::Complex64::new(0.0, 0.0); grid.len()];
    for (axis, comp) in u.iter().enumerate() {
        for (o, d) in div.iter_mut().zip(derivative(&plan.forward(comp), grid, axis)) {
            *o += d;
        }
    }
    plan.inverse(&div).iter().fold(0.0, |m, v| f64::max(m, v.abs()))
}

/// Fourier transform of the unit-mass bump, tabulated at the `|k|²` a flow can produce.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpTransform {
    delta: f64,
    /// `(|k|², factor in 2D, factor in 3D)`.
    table: Vec<(i64, f64, f64)>,
}

impl BumpTransform {
    fn new(delta: f64, k2s: &[i64]) -> Self {
        let table = k2s
            .iter()
            .map(|&k2| {
                let q = TWO_PI * sqrt(k2 as f64) * delta;
                (k2, bump_transform_radial(q, 2), bump_transform_radial(q, 3))
            })
            .collect();
        Self { delta, table }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn factor(&self, k2: i64, dim: usize) -> f64 {
        match self.table.iter().find(|e| e.0 == k2) {
            Some(&(_, f2, f3)) => {
                if dim == 2 {
                    f2
                } else {
                    f3
                }
            }
            None => {
                let q = TWO_PI * sqrt(k2 as f64) * self.delta;
                bump_transform_radial(q, dim)
            }
        }
    }
}

/// Transform of `(1 - r²)⁴` on the unit ball, normalized to 1 at `q = 0`, evaluated at the
/// dimensionless frequency `q = 2π|k|δ` by composite Simpson quadrature in `r`.
pub fn bump_transform_radial(q: f64, dim: usize) -> f64 {
    if q == 0.0 {
        return 1.0;
    }
    const STEPS: usize = 2000;
    let h = 1.0 / STEPS as f64;
    let integrand = |r: f64, q: f64| -> f64 {
        let b = 1.0 - r * r;
        let b4 = b * b * b * b;
        if dim == 2 {
            b4 * libm::j0(q * r) * r
        } else {
            let qr = q * r;
            let sinc = if qr == 0.0 { 1.0 } else { sin(qr) / qr };
            b4 * sinc * r * r
        }
    };
    let simpson = |q: f64| -> f64 {
        let mut acc = integrand(0.0, q) + integrand(1.0, q);
        for i in 1..STEPS {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * integrand(i as f64 * h, q);
        }
        acc * h / 3.0
    };
    simpson(q) / simpson(0.0)
}

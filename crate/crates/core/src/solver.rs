//! Time stepping for the advected Keller-Segel equation, pure transport and trajectories.
//!
//! The density is advanced in Fourier space with an integrating factor for diffusion and an
//! explicit midpoint rule for the divergence-form flux `ρ (A u + ∇c)`:
//!
//! ```text
//! ρ̂½   = E(dt/2) (ρ̂ + dt/2 · N̂(ρ̂, t))
//! ρ̂new = E(dt) ρ̂ + dt · E(dt/2) · N̂(ρ̂½, t + dt/2),      E(s) = exp(-4π²|k|² s)
//! ```
//!
//! `N̂ = -2πi k·F̂` vanishes at `k = 0`, so the mean is untouched bit for bit.
//!
//! All flows in [`crate::flows`] are piecewise stationary in time with closed-left pieces;
//! steps never straddle a switching time.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::diagnostics::{self, DetectorClause, DetectorConfig, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::flows::{eval_waves, sample_waves, FlowSpec, Wave};
use crate::interp;
use crate::math::{exp, floor, pow, PI, TWO_PI};
use crate::spectral::{Grid, Plan, ScalarField, SpectralCoeffs};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt_max: f64,
    pub cfl: f64,
    pub dealias_fraction: f64,
    /// Relative floor on `min ρ₀` accepted by [`run_simulation`].
    pub negative_tolerance: f64,
    /// Optional `exp(-ν (2π|k|)⁴ dt)` damping applied after semi-Lagrangian steps.
    pub hyperdiffusion_for_transport: f64,
    /// Include the aggregation term; `false` leaves advection-diffusion.
    pub chemotaxis: bool,
    /// A step size below this is treated as a stalled run.
    pub min_dt: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt_max: 1e-3,
            cfl: 0.5,
            dealias_fraction: 2.0 / 3.0,
            negative_tolerance: 1e-8,
            hyperdiffusion_for_transport: 0.0,
            chemotaxis: true,
            min_dt: 1e-13,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, "must be positive and finite"))
            }
        };
        pos("dt_max", self.dt_max)?;
        pos("cfl", self.cfl)?;
        pos("min_dt", self.min_dt)?;
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return Err(Error::param("dealias_fraction", "must lie in (0, 1]"));
        }
        if !(self.negative_tolerance >= 0.0) {
            return Err(Error::param("negative_tolerance", "must be nonnegative"));
        }
        if !(self.hyperdiffusion_for_transport >= 0.0) {
            return Err(Error::param("hyperdiffusion_for_transport", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    t: f64,
    rho: ScalarField,
    rho_hat: SpectralCoeffs,
    criterion_integral: f64,
    mean: f64,
}

impl SimState {
    pub fn new(rho0: ScalarField) -> Self {
        let plan = Plan::new(rho0.grid());
        let rho_hat = SpectralCoeffs::from_vec_unchecked(rho0.grid(), plan.forward(rho0.values()));
        let mean = rho_hat.mean();
        Self {
            t: 0.0,
            rho: rho0,
            rho_hat,
            criterion_integral: 0.0,
            mean,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn rho(&self) -> &ScalarField {
        &self.rho
    }

    pub fn rho_hat(&self) -> &SpectralCoeffs {
        &self.rho_hat
    }

    pub fn criterion_integral(&self) -> f64 {
        self.criterion_integral
    }

    /// `ρ̄`, fixed at construction.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn grid(&self) -> Grid {
        self.rho.grid()
    }

    /// `‖ρ - ρ̄‖_{L²}` from the spectral cache.
    pub fn l2_dev(&self) -> f64 {
        libm::sqrt(self.rho_hat.coeffs()[1..].iter().map(|c| c.norm_sqr()).sum())
    }
}

/// Per-grid tables shared by every step of a run.
#[derive(Debug, Clone)]
struct Ops {
    grid: Grid,
    plan: Plan,
    /// `2π k_j`, Nyquist entries zeroed.
    ik: Vec<[f64; 3]>,
    /// `4π²|k|²`.
    lap: Vec<f64>,
    /// `1/(4π²|k|²)`, zero at `k = 0`.
    inv_lap: Vec<f64>,
    keep: Vec<bool>,
    k_cut: f64,
}

impl Ops {
    fn new(grid: Grid, dealias_fraction: f64) -> Self {
        let half = grid.n() as i64 / 2;
        let cut = dealias_fraction * half as f64;
        let mut ik = Vec::with_capacity(grid.len());
        let mut lap = Vec::with_capacity(grid.len());
        let mut inv_lap = Vec::with_capacity(grid.len());
        let mut keep = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let k = grid.wavevector(i);
            let mut row = [0.0; 3];
            for a in 0..grid.dim() {
                row[a] = if k[a] == half { 0.0 } else { TWO_PI * k[a] as f64 };
            }
            ik.push(row);
            let l = 4.0 * PI * PI * grid.k_squared(i);
            lap.push(l);
            inv_lap.push(if i == 0 { 0.0 } else { 1.0 / l });
            keep.push(k[..grid.dim()].iter().all(|&c| (c.abs() as f64) <= cut));
        }
        Self {
            grid,
            plan: Plan::new(grid),
            ik,
            lap,
            inv_lap,
            keep,
            k_cut: cut,
        }
    }

    /// Components of `∇(-Δ)⁻¹ρ̂` in physical space.
    fn chem_gradient(&self, rho_hat: &[Complex64]) -> Vec<Vec<f64>> {
        let dim = self.grid.dim();
        let comp = |a: usize| -> Vec<Complex64> {
            rho_hat
                .iter()
                .enumerate()
                .map(|(i, c)| c * Complex64::new(0.0, self.ik[i][a] * self.inv_lap[i]))
                .collect()
        };
        let (g0, g1) = self.plan.inverse_pair(&comp(0), &comp(1));
        let mut out = vec![g0, g1];
        if dim == 3 {
            out.push(self.plan.inverse(&comp(2)));
        }
        out
    }

    /// `-2πi k·F̂` for the dealiased flux of `ρ (u + ∇c)`; also returns the transport speed.
    fn nonlinear(&self, rho_hat: &[Complex64], rho: &[f64], waves: &[Wave], chemotaxis: bool) -> Nonlinear {
        let dim = self.grid.dim();
        let len = self.grid.len();
        let mut drift: Vec<Vec<f64>> = if chemotaxis {
            self.chem_gradient(rho_hat)
        } else {
            vec![vec![0.0; len]; dim]
        };
        let chem_speed = max_abs_all(&drift);
        let mut flow_speed = 0.0;
        if !waves.is_empty() {
            let u = sample_waves(waves, self.grid);
            flow_speed = max_abs_all(&u);
            for (d, uc) in drift.iter_mut().zip(&u) {
                for (x, y) in d.iter_mut().zip(uc) {
                    *x += y;
                }
            }
        }
        if !chemotaxis && waves.is_empty() {
            return Nonlinear {
                n_hat: vec![Complex64::new(0.0, 0.0); len],
                speed: 0.0,
            };
        }
        for d in &mut drift {
            for (x, r) in d.iter_mut().zip(rho) {
                *x *= r;
            }
        }
        let (f0, f1) = self.plan.forward_pair(&drift[0], &drift[1]);
        let f2 = if dim == 3 {
            Some(self.plan.forward(&drift[2]))
        } else {
            None
        };
        let mut n_hat = Vec::with_capacity(len);
        for i in 0..len {
            if !self.keep[i] {
                n_hat.push(Complex64::new(0.0, 0.0));
                continue;
            }
            let k = &self.ik[i];
            let mut s = f0[i] * k[0] + f1[i] * k[1];
            if let Some(f2) = &f2 {
                s += f2[i] * k[2];
            }
            // -i·s
            n_hat.push(Complex64::new(s.im, -s.re));
        }
        Nonlinear {
            n_hat,
            speed: flow_speed + chem_speed,
        }
    }
}

struct Nonlinear {
    n_hat: Vec<Complex64>,
    speed: f64,
}

fn max_abs_all(v: &[Vec<f64>]) -> f64 {
    v.iter().flat_map(|c| c.iter()).fold(0.0, |m, x| f64::max(m, x.abs()))
}

/// Reusable stepper for one grid and flow.
#[derive(Debug, Clone)]
pub struct KsStepper<'a> {
    ops: Ops,
    flow: &'a FlowSpec,
    cfg: StepperConfig,
}

/// First midpoint stage, evaluated at the current state; it fixes the admissible step.
pub struct Stage {
    nonlinear: Nonlinear,
    waves: Vec<Wave>,
    pub admissible_dt: f64,
}

impl<'a> KsStepper<'a> {
    pub fn new(grid: Grid, flow: &'a FlowSpec, cfg: StepperConfig) -> Result<Self> {
        cfg.validate()?;
        flow.check_grid(grid)?;
        Ok(Self {
            ops: Ops::new(grid, cfg.dealias_fraction),
            flow,
            cfg,
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// Step bound from the transport speed `S`, the aggregation rate `max ρ`, and the weak
    /// instability of the midpoint rule on the imaginary axis: at the dealiasing cutoff
    /// `k_c`, the growth `(2π k_c S dt)⁴/8` must not exceed the diffusive decay `4π²k_c² dt`.
    fn admissible(&self, speed: f64, rho_max: f64) -> f64 {
        let h = self.ops.grid.spacing();
        let mut dt = self.cfg.cfl * h / (speed + 1e-30);
        if self.cfg.chemotaxis && rho_max > 0.0 {
            dt = dt.min(self.cfg.cfl / rho_max);
        }
        if speed > 0.0 {
            let kc = self.ops.k_cut;
            let stab = pow(2.0 / (PI * PI * kc * kc * pow(speed, 4.0)), 1.0 / 3.0);
            dt = dt.min(stab);
        }
        dt
    }

    pub fn stage(&self, state: &SimState) -> Stage {
        let waves = self.flow.waves_at(state.t, self.ops.grid.dim());
        let nonlinear = self
            .ops
            .nonlinear(state.rho_hat.coeffs(), state.rho.values(), &waves, self.cfg.chemotaxis);
        let rho_max = state.rho.values().iter().fold(0.0, |m, v| f64::max(m, v.abs()));
        let admissible_dt = self.admissible(nonlinear.speed, rho_max);
        Stage {
            nonlinear,
            waves,
            admissible_dt,
        }
    }

    /// Completes the step begun by `stage`; `dt` is not re-checked here.
    pub fn finish(&self, state: &SimState, stage: Stage, dt: f64) -> Result<SimState> {
        let ops = &self.ops;
        let len = ops.grid.len();
        let rho_hat = state.rho_hat.coeffs();
        let mut e_half = Vec::with_capacity(len);
        let mut half = Vec::with_capacity(len);
        for i in 0..len {
            let e = exp(-ops.lap[i] * 0.5 * dt);
            e_half.push(e);
            half.push((rho_hat[i] + stage.nonlinear.n_hat[i] * (0.5 * dt)) * e);
        }
        let rho_half = ops.plan.inverse(&half);
        let n2 = ops.nonlinear(&half, &rho_half, &stage.waves, self.cfg.chemotaxis);
        let mut next = Vec::with_capacity(len);
        for i in 0..len {
            let e = e_half[i];
            next.push(rho_hat[i] * (e * e) + n2.n_hat[i] * (dt * e));
        }
        next[0] = rho_hat[0];
        let values = ops.plan.inverse(&next);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalOverflow { t: state.t + dt });
        }
        let exponent = 4.0 / (4.0 - ops.grid.dim() as f64);
        let incr = dt * pow(state.l2_dev(), exponent);
        Ok(SimState {
            t: state.t + dt,
            rho: ScalarField::from_vec_unchecked(ops.grid, values),
            rho_hat: SpectralCoeffs::from_vec_unchecked(ops.grid, next),
            criterion_integral: state.criterion_integral + incr,
            mean: state.mean,
        })
    }

    /// One checked step of size `dt`.
    pub fn step(&self, state: &SimState, dt: f64) -> Result<SimState> {
        if !(dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        let stage = self.stage(state);
        let admissible = stage.admissible_dt.min(self.cfg.dt_max);
        if dt > admissible * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, admissible });
        }
        if let Some(s) = self.flow.next_switch(state.t) {
            if state.t + dt > s * (1.0 + 1e-14) {
                return Err(Error::param("dt", "step crosses a flow switching time"));
            }
        }
        self.finish(state, stage, dt)
    }
}

/// One IMEX step of the full equation with the CFL contract checked.
pub fn ks_step(state: &SimState, flow: &FlowSpec, dt: f64, cfg: &StepperConfig) -> Result<SimState> {
    KsStepper::new(state.grid(), flow, *cfg)?.step(state, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    BlowupDetected,
    Overflow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunControl {
    /// Keep every `diag_stride`-th step in the history (the detector sees every step).
    pub diag_stride: usize,
    pub detector: DetectorConfig,
    /// `N` of the low-mode projection reported in each record.
    pub low_mode_n: usize,
}

impl Default for RunControl {
    fn default() -> Self {
        Self {
            diag_stride: 1,
            detector: DetectorConfig::default(),
            low_mode_n: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SimState,
    pub termination: Termination,
    pub clause: Option<DetectorClause>,
    pub steps: usize,
}

pub fn run_simulation(
    rho0: ScalarField,
    flow: &FlowSpec,
    t_end: f64,
    cfg: &StepperConfig,
    diag_stride: usize,
) -> Result<RunOutput> {
    let control = RunControl {
        diag_stride,
        ..RunControl::default()
    };
    run_simulation_with(rho0, flow, t_end, cfg, &control)
}

/// Adaptive run to `t_end`, stopping early when the detector fires or the step stalls.
pub fn run_simulation_with(
    rho0: ScalarField,
    flow: &FlowSpec,
    t_end: f64,
    cfg: &StepperConfig,
    control: &RunControl,
) -> Result<RunOutput> {
    run_simulation_observed(rho0, flow, t_end, cfg, control, &mut |_, _| {})
}

/// [`run_simulation_with`] that also hands every kept record and its state to `observe`.
pub fn run_simulation_observed(
    rho0: ScalarField,
    flow: &FlowSpec,
    t_end: f64,
    cfg: &StepperConfig,
    control: &RunControl,
    observe: &mut dyn FnMut(&SimState, &DiagnosticsRecord),
) -> Result<RunOutput> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::param("T", "horizon must be positive"));
    }
    if control.diag_stride == 0 {
        return Err(Error::param("diag_stride", "must be at least 1"));
    }
    let scale = rho0.values().iter().fold(0.0, |m, v| f64::max(m, v.abs()));
    if rho0.min() < -cfg.negative_tolerance * scale {
        return Err(Error::param("rho0", "initial density is negative beyond tolerance"));
    }
    let stepper = KsStepper::new(rho0.grid(), flow, *cfg)?;
    let mut state = SimState::new(rho0);
    let mut records = Vec::new();
    let mut last = diagnostics::record_with_dt(&state, control.low_mode_n, 0.0);
    records.push(last);
    observe(&state, &last);
    let mut steps = 0usize;
    let mut termination = Termination::Completed;
    let mut clause = diagnostics::detect_clause(&last, &control.detector);
    if clause.is_some() {
        termination = Termination::BlowupDetected;
    }
    while termination == Termination::Completed && state.t < t_end {
        state.t = nudge_to_switch(flow, state.t, cfg.min_dt);
        if t_end - state.t < cfg.min_dt {
            state.t = t_end;
            break;
        }
        let stage = stepper.stage(&state);
        let mut dt = stage.admissible_dt.min(cfg.dt_max).min(t_end - state.t);
        let mut snap_to = None;
        if let Some(s) = flow.next_switch(state.t) {
            if state.t + dt >= s {
                dt = s - state.t;
                snap_to = Some(s);
            }
        }
        if state.t + dt >= t_end {
            snap_to = Some(t_end);
        }
        if !(dt >= cfg.min_dt) {
            termination = Termination::Overflow;
            break;
        }
        state = match stepper.finish(&state, stage, dt) {
            Ok(s) => s,
            Err(Error::NumericalOverflow { .. }) => {
                termination = Termination::Overflow;
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(s) = snap_to {
            state.t = s;
        }
        steps += 1;
        last = diagnostics::record_with_dt(&state, control.low_mode_n, dt);
        clause = diagnostics::detect_clause(&last, &control.detector);
        if clause.is_some() {
            termination = Termination::BlowupDetected;
        }
        if steps % control.diag_stride == 0 || clause.is_some() || state.t >= t_end {
            records.push(last);
            observe(&state, &last);
        }
    }
    if records.last() != Some(&last) {
        records.push(last);
        observe(&state, &last);
    }
    Ok(RunOutput {
        records,
        final_state: state,
        termination,
        clause,
        steps,
    })
}

/// Moves `t` onto a switch lying less than `min_dt` ahead, so rounding in switch or lattice
/// times never produces a stalled step.
fn nudge_to_switch(flow: &FlowSpec, t: f64, min_dt: f64) -> f64 {
    match flow.next_switch(t) {
        Some(s) if s - t < min_dt => s,
        _ => t,
    }
}

/// Point reached from `x` under the flow, with and without wrapping to the torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMapPoint {
    pub wrapped: [f64; 3],
    pub unwrapped: [f64; 3],
    pub dim: usize,
}

fn rk4_piece(waves: &[Wave], x: &mut [f64; 3], dim: usize, h: f64) {
    let f = |p: &[f64; 3]| eval_waves(waves, &p[..dim]).components;
    let add = |p: &[f64; 3], k: &[f64; 3], s: f64| {
        let mut q = *p;
        for i in 0..dim {
            q[i] += s * k[i];
        }
        q
    };
    let k1 = f(x);
    let k2 = f(&add(x, &k1, 0.5 * h));
    let k3 = f(&add(x, &k2, 0.5 * h));
    let k4 = f(&add(x, &k3, h));
    for i in 0..dim {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Splits `[lo, hi)` at the flow's switching times.
fn pieces(flow: &FlowSpec, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut a = lo;
    while a < hi {
        let b = match flow.next_switch(a) {
            Some(s) if s < hi => s,
            _ => hi,
        };
        out.push((a, b));
        a = b;
    }
    out
}

/// Integrates `dX/dt = u(X, t)` from `t0` to `t1` (either direction) with RK4 substeps `≤ dt`.
pub fn flow_map(flow: &FlowSpec, x: &[f64], t0: f64, t1: f64, dt: f64) -> Result<FlowMapPoint> {
    let dim = x.len();
    if dim != 2 && dim != 3 {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let mut p = [0.0; 3];
    p[..dim].copy_from_slice(x);
    let (lo, hi, sign) = if t1 >= t0 { (t0, t1, 1.0) } else { (t1, t0, -1.0) };
    let mut segs = pieces(flow, lo, hi);
    if sign < 0.0 {
        segs.reverse();
    }
    for (a, b) in segs {
        let waves = flow.waves_at(a, dim);
        let steps = libm::ceil((b - a) / dt).max(1.0) as usize;
        let h = sign * (b - a) / steps as f64;
        for _ in 0..steps {
            rk4_piece(&waves, &mut p, dim, h);
        }
    }
    let mut w = [0.0; 3];
    for i in 0..dim {
        w[i] = crate::math::wrap(p[i]);
    }
    Ok(FlowMapPoint {
        wrapped: w,
        unwrapped: p,
        dim,
    })
}

/// Semi-Lagrangian step on one stationary piece: backtrack each node with a single RK4
/// step and interpolate with periodic cubic Lagrange stencils.
fn semi_lagrangian(grid: Grid, values: &[f64], waves: &[Wave], h: f64) -> Vec<f64> {
    if waves.is_empty() {
        return values.to_vec();
    }
    let dim = grid.dim();
    (0..grid.len())
        .map(|i| {
            let mut p = grid.point(i);
            rk4_piece(waves, &mut p, dim, -h);
            interp::cubic(grid, values, &p[..dim])
        })
        .collect()
}

fn hyperdiffuse(plan: &Plan, values: &[f64], nu: f64, dt: f64) -> Vec<f64> {
    let grid = plan.grid();
    let mut c = plan.forward(values);
    for (i, z) in c.iter_mut().enumerate() {
        let k2 = 4.0 * PI * PI * grid.k_squared(i);
        *z *= exp(-nu * k2 * k2 * dt);
    }
    plan.inverse(&c)
}

/// Advances `∂_t f + u·∇f = 0` from `t` to `t + dt`.
pub fn transport_step(f: &ScalarField, flow: &FlowSpec, t: f64, dt: f64) -> Result<ScalarField> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    if f.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let grid = f.grid();
    let mut values = f.values().to_vec();
    for (a, b) in pieces(flow, t, t + dt) {
        values = semi_lagrangian(grid, &values, &flow.waves_at(a, grid.dim()), b - a);
    }
    ScalarField::new(grid, values)
}

/// Transport over `[t0, t1]` with substeps no longer than `max_dt`, aligned with switches.
pub fn advect(f: &ScalarField, flow: &FlowSpec, t0: f64, t1: f64, max_dt: f64, cfg: &StepperConfig) -> Result<ScalarField> {
    if !(max_dt > 0.0) {
        return Err(Error::param("max_dt", "must be positive"));
    }
    let grid = f.grid();
    let plan = Plan::new(grid);
    let mut values = f.values().to_vec();
    for (a, b) in pieces(flow, t0, t1) {
        let waves = flow.waves_at(a, grid.dim());
        let steps = libm::ceil((b - a) / max_dt).max(1.0) as usize;
        let h = (b - a) / steps as f64;
        for _ in 0..steps {
            values = semi_lagrangian(grid, &values, &waves, h);
            if cfg.hyperdiffusion_for_transport > 0.0 {
                values = hyperdiffuse(&plan, &values, cfg.hyperdiffusion_for_transport, h);
            }
        }
    }
    ScalarField::new(grid, values)
}

/// Transport substep keeping `‖∇(Au)‖ dt ≈ 0.1`, so the number of interpolations over a
/// fixed flow-time window does not depend on the amplitude.
pub fn transport_dt(flow: &FlowSpec) -> f64 {
    let lip = flow.lipschitz_bound();
    if lip > 0.0 {
        0.1 / lip
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone)]
pub struct PairedResult {
    pub samples: Vec<(f64, f64)>,
    pub sup_distance: f64,
    pub termination: Termination,
}

/// Number of lattice intervals used by [`paired_run`].
pub const PAIRED_SAMPLES: usize = 100;

/// Co-evolves the full equation and pure transport from the same data and records
/// `‖ρ - η‖_{L²}` on a uniform lattice over `[0, t_window]`.
pub fn paired_run(rho0: ScalarField, flow: &FlowSpec, t_window: f64, cfg: &StepperConfig) -> Result<PairedResult> {
    paired_run_with(rho0, flow, t_window, cfg, PAIRED_SAMPLES)
}

pub fn paired_run_with(
    rho0: ScalarField,
    flow: &FlowSpec,
    t_window: f64,
    cfg: &StepperConfig,
    intervals: usize,
) -> Result<PairedResult> {
    if !(t_window > 0.0) || intervals == 0 {
        return Err(Error::param("t_window", "window and lattice must be nonempty"));
    }
    let grid = rho0.grid();
    let stepper = KsStepper::new(grid, flow, *cfg)?;
    let eta_dt = transport_dt(flow);
    let mut state = SimState::new(rho0.clone());
    let mut eta = rho0;
    let mut samples = vec![(0.0, 0.0)];
    let mut sup: f64 = 0.0;
    let mut termination = Termination::Completed;
    'lattice: for j in 1..=intervals {
        let t_next = t_window * j as f64 / intervals as f64;
        let t_prev = state.t;
        while state.t < t_next {
            state.t = nudge_to_switch(flow, state.t, cfg.min_dt);
            if t_next - state.t < cfg.min_dt {
                state.t = t_next;
                break;
            }
            let stage = stepper.stage(&state);
            let mut dt = stage.admissible_dt.min(cfg.dt_max).min(t_next - state.t);
            let mut snap = (state.t + dt >= t_next).then_some(t_next);
            if let Some(s) = flow.next_switch(state.t) {
                if state.t + dt >= s && s < t_next {
                    dt = s - state.t;
                    snap = Some(s);
                }
            }
            if !(dt >= cfg.min_dt) {
                termination = Termination::Overflow;
                break 'lattice;
            }
            state = match stepper.finish(&state, stage, dt) {
                Ok(s) => s,
                Err(Error::NumericalOverflow { .. }) => {
                    termination = Termination::Overflow;
                    break 'lattice;
                }
                Err(e) => return Err(e),
            };
            if let Some(s) = snap {
                state.t = s;
            }
        }
        eta = advect(&eta, flow, t_prev, t_next, eta_dt, cfg)?;
        let d = crate::spectral::lp_of(
            &state
                .rho
                .values()
                .iter()
                .zip(eta.values())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
            2.0,
        );
        sup = sup.max(d);
        samples.push((t_next, d));
    }
    Ok(PairedResult {
        samples,
        sup_distance: sup,
        termination,
    })
}

/// Time-periodic helper: index of the closed-left interval of length `period` holding `t`.
pub fn interval_index(t: f64, period: f64) -> i64 {
    floor(t / period) as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{make_cellular, make_shear_alternating, make_uniform, make_zero};
    use crate::initdata::random_smooth_field;
    use crate::math::{cos, sin, sqrt};
    use crate::spectral::{to_spectral, lp_norm};

    fn g2(n: usize) -> Grid {
        Grid::new(2, n).unwrap()
    }

    #[test]
    fn constant_is_fixed_point() {
        let g = g2(32);
        let flow = make_cellular(1).unwrap();
        let s = SimState::new(ScalarField::constant(g, 2.0));
        let cfg = StepperConfig::default();
        let next = ks_step(&s, &flow, 1e-3, &cfg).unwrap();
        for v in next.rho().values() {
            assert!((v - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_mode_growth() {
        let g = g2(32);
        let eps = 1e-6;
        let rho0 = ScalarField::from_fn(g, |x| 1.0 + eps * sin(TWO_PI * x[0]));
        let s = SimState::new(rho0);
        let next = ks_step(&s, &make_zero(), 1e-3, &StepperConfig::default()).unwrap();
        let before = s.rho_hat().get(&[1, 0]).norm();
        let after = next.rho_hat().get(&[1, 0]).norm();
        let expect = exp((1.0 - 4.0 * PI * PI) * 1e-3);
        assert!(((after / before) - expect).abs() / expect < 1e-4);
    }

    #[test]
    fn heat_only_is_exact() {
        let g = g2(32);
        let rho0 = ScalarField::from_fn(g, |x| 3.0 + sin(TWO_PI * x[0]) + 0.5 * cos(2.0 * TWO_PI * (x[0] + x[1])));
        let cfg = StepperConfig {
            chemotaxis: false,
            ..StepperConfig::default()
        };
        let out = run_simulation(rho0.clone(), &make_zero(), 0.1, &cfg, 10).unwrap();
        assert_eq!(out.termination, Termination::Completed);
        let c0 = to_spectral(&rho0);
        let c1 = out.final_state.rho_hat();
        for &(k, k2) in &[([1i64, 0i64], 1.0), ([2, 2], 8.0)] {
            let expect = c0.get(&k) * exp(-4.0 * PI * PI * k2 * 0.1);
            assert!((c1.get(&k) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn mass_conserved_per_step() {
        let g = g2(64);
        let f = random_smooth_field(g, 1, 3.0).unwrap();
        let amp = f.max().max(-f.min());
        let rho0 = f.map(|v| 2.0 + v / amp);
        let m0 = rho0.mean();
        let flow = make_shear_alternating(1, 0.01, 3).unwrap();
        let out = run_simulation(rho0, &flow, 0.02, &StepperConfig::default(), 1).unwrap();
        for r in &out.records {
            assert!((r.mass - m0).abs() <= 1e-13 * m0);
        }
    }

    #[test]
    fn cfl_violation_reports_admissible() {
        let g = g2(32);
        let s = SimState::new(ScalarField::from_fn(g, |x| 1.0 + 0.1 * sin(TWO_PI * x[0])));
        let flow = crate::flows::scale_amplitude(make_cellular(1).unwrap(), 100.0).unwrap();
        match ks_step(&s, &flow, 1e-2, &StepperConfig::default()) {
            Err(Error::CflViolation { admissible, .. }) => assert!(admissible < 1e-2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transport_zero_and_shift() {
        let g = g2(128);
        let f = ScalarField::from_fn(g, |x| sin(TWO_PI * x[0]) * cos(2.0 * TWO_PI * x[1]) + 0.3 * cos(3.0 * TWO_PI * x[0]));
        assert_eq!(transport_step(&f, &make_zero(), 0.0, 0.5).unwrap(), f);
        let moved = transport_step(&f, &make_uniform([1.0, 0.0, 0.0]), 0.0, 0.25).unwrap();
        let expect = ScalarField::from_fn(g, |x| {
            let y = x[0] - 0.25;
            sin(TWO_PI * y) * cos(2.0 * TWO_PI * x[1]) + 0.3 * cos(3.0 * TWO_PI * y)
        });
        let err = lp_norm(&moved.sub(&expect).unwrap(), f64::INFINITY).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn transport_range_is_preserved() {
        let g = g2(128);
        let f = ScalarField::from_fn(g, |x| sin(TWO_PI * x[0]) * sin(TWO_PI * x[1]));
        let flow = make_cellular(1).unwrap();
        let out = advect(&f, &flow, 0.0, 0.5, 0.01, &StepperConfig::default()).unwrap();
        let osc = f.max() - f.min();
        assert!(out.max() <= f.max() + 1e-6 * osc);
        assert!(out.min() >= f.min() - 1e-6 * osc);
    }

    #[test]
    fn flow_map_examples() {
        let zero = flow_map(&make_zero(), &[0.1, 0.2], 0.0, 1.0, 0.1).unwrap();
        assert_eq!(&zero.wrapped[..2], &[0.1, 0.2]);
        let shear = make_shear_alternating(1, 10.0, 0).unwrap();
        let p = flow_map(&shear, &[0.0, 0.25], 0.0, 0.7, 0.01).unwrap();
        assert!((p.unwrapped[0] - 0.7).abs() < 1e-10);
        assert!((p.wrapped[0] - crate::math::wrap(0.7)).abs() < 1e-10);
        assert!((p.wrapped[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn flow_map_reverses() {
        let flow = make_shear_alternating(2, 0.13, 5).unwrap();
        let x = [0.12, -0.31];
        let fwd = flow_map(&flow, &x, 0.0, 1.0, 1e-3).unwrap();
        let back = flow_map(&flow, &fwd.unwrapped[..2], 1.0, 0.0, 1e-3).unwrap();
        for i in 0..2 {
            assert!((back.unwrapped[i] - x[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn cellular_area_preservation() {
        let flow = make_cellular(1).unwrap();
        let h = 1e-5;
        for &(x, y) in &[(0.1, 0.2), (-0.3, 0.05), (0.2, -0.4)] {
            let m = |px: f64, py: f64| flow_map(&flow, &[px, py], 0.0, 1.0, 1e-3).unwrap().unwrapped;
            let (xp, xm) = (m(x + h, y), m(x - h, y));
            let (yp, ym) = (m(x, y + h), m(x, y - h));
            let j = ((xp[0] - xm[0]) * (yp[1] - ym[1]) - (xp[1] - xm[1]) * (yp[0] - ym[0])) / (4.0 * h * h);
            assert!((j - 1.0).abs() < 1e-6, "{j}");
        }
    }

    #[test]
    fn paired_constant_has_zero_distance() {
        let g = g2(32);
        let out = paired_run(ScalarField::constant(g, 1.5), &make_cellular(1).unwrap(), 0.01, &StepperConfig::default()).unwrap();
        assert!(out.sup_distance < 1e-12);
    }

    #[test]
    fn paired_zero_flow_closed_form() {
        let g = g2(32);
        let eps = 1e-4;
        let rho0 = ScalarField::from_fn(g, |x| 1.0 + eps * sin(TWO_PI * x[0]));
        let out = paired_run_with(rho0, &make_zero(), 0.05, &StepperConfig::default(), 10).unwrap();
        for &(t, d) in &out.samples[1..] {
            let expect = eps / sqrt(2.0) * (exp((1.0 - 4.0 * PI * PI) * t) - 1.0).abs();
            assert!((d - expect).abs() <= 0.05 * expect, "t={t} d={d} expect={expect}");
        }
    }
}

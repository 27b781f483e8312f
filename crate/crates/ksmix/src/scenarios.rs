//! Scenario drivers. Each returns its typed result together with a [`Report`]: PASS/FAIL
//! verdicts (tolerances spelled out in the detail text) and the files to write.

use std::fmt;

use ksmix_core::diagnostics::{self, DetectorClause, DiagnosticsRecord, Inequality};
use ksmix_core::flows::{self, FlowSpec};
use ksmix_core::initdata;
use ksmix_core::rng;
use ksmix_core::solver::{self, RunControl, RunOutput, Termination};
use ksmix_core::spectral::to_spectral;
use ksmix_core::{Error, Grid, NormConvention, ScalarField};

use crate::config::{FlowChoice, InitialSpec, RunConfig, ScenarioKind};
use crate::io::{self, Artifact, Cell};

/// Critical mass of the 2D equation; heavier concentrated data is expected to blow up.
pub const CRITICAL_MASS_2D: f64 = 8.0 * std::f64::consts::PI;

/// Allowed size of the single tolerated inversion in the sweep monotonicity checks.
pub const INVERSION_TOLERANCE: f64 = 0.05;

/// Relative spread allowed between blow-up times across resolutions.
pub const REFINEMENT_TOLERANCE: f64 = 0.10;

/// Cap on the zero-flow run that calibrates the suppression horizon.
pub const BASELINE_CAP: f64 = 1.0;

/// Horizon of the suppression sweep, in multiples of the baseline blow-up time.
pub const HORIZON_FACTOR: f64 = 5.0;

/// Samples per half stage of the mixing benchmark.
pub const MIX_SAMPLES_PER_HALF: usize = 8;

pub const HOMOGENEITY_TOLERANCE: f64 = 1e-10;
pub const STABILITY_FACTOR: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid setup: {0}")]
    Setup(Error),
    #[error("numerical abort: {0}")]
    Numerical(Error),
}

impl From<Error> for ScenarioError {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalOverflow { .. } | Error::NonFinite => ScenarioError::Numerical(e),
            other => ScenarioError::Setup(other),
        }
    }
}

pub type Result<T, E = ScenarioError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub scenario: ScenarioKind,
    pub verdicts: Vec<Verdict>,
    /// Informational lines; written to `verdict.txt` prefixed with `#`.
    pub notes: Vec<String>,
    pub artifacts: Vec<Artifact>,
    /// A run that should have completed hit a numerical failure.
    pub aborted: bool,
}

impl Report {
    fn new(scenario: ScenarioKind) -> Self {
        Self {
            scenario,
            verdicts: Vec::new(),
            notes: Vec::new(),
            artifacts: Vec::new(),
            aborted: false,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.aborted {
            3
        } else if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn verdict_text(&self) -> String {
        let mut s = String::new();
        for v in &self.verdicts {
            s.push_str(&v.to_string());
            s.push('\n');
        }
        for n in &self.notes {
            s.push_str("# ");
            s.push_str(n);
            s.push('\n');
        }
        s
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    fn verdict(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict::new(name, pass, detail));
    }

    fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    fn text(&mut self, name: impl Into<String>, text: String) {
        self.artifacts.push(Artifact::text(name, text));
    }

    fn snapshot(&mut self, name: impl Into<String>, f: &ScalarField, t: f64) {
        self.artifacts.push(Artifact {
            name: name.into(),
            bytes: io::encode_snapshot(f, t),
        });
    }

    /// Appends `config.txt` and `verdict.txt`.
    fn seal(mut self, cfg: &RunConfig) -> Self {
        self.text("config.txt", cfg.to_text());
        let verdicts = self.verdict_text();
        self.text("verdict.txt", verdicts);
        self
    }
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Completed => "completed",
        Termination::BlowupDetected => "blowup_detected",
        Termination::Overflow => "overflow",
    }
}

// ---------------------------------------------------------------------------------------
// Shared setup

pub fn initial_field(cfg: &RunConfig, n: usize) -> Result<ScalarField> {
    let grid = Grid::new(cfg.grid.dim, n)?;
    let f = match &cfg.initial {
        InitialSpec::Gaussian { mass, width, center } => initdata::gaussian_bump(grid, *mass, *width, center)?,
        InitialSpec::Constant { value } => ScalarField::constant(grid, *value),
        InitialSpec::Sine { mean, amplitude, mode } => ScalarField::from_fn(grid, |x| {
            let phase: f64 = x.iter().zip(mode).map(|(xi, k)| xi * *k as f64).sum();
            mean + amplitude * (std::f64::consts::TAU * phase).sin()
        }),
        InitialSpec::Random { mean, amplitude, decay } => {
            let g = initdata::random_smooth_field(grid, cfg.params.seed, *decay)?;
            let scale = g.max().max(-g.min());
            let k = if scale > 0.0 { amplitude / scale } else { 0.0 };
            g.map(|v| mean + k * v)
        }
    };
    Ok(f)
}

/// The configured flow at unit amplitude, mollified when requested.
pub fn base_flow(cfg: &RunConfig) -> Result<FlowSpec> {
    let flow = match &cfg.flow.kind {
        FlowChoice::Zero => flows::make_zero(),
        FlowChoice::Uniform { velocity } => {
            let mut v = [0.0; 3];
            v[..velocity.len()].copy_from_slice(velocity);
            flows::make_uniform(v)
        }
        FlowChoice::Shear { m, t_sw, phase_seed } => {
            flows::make_shear_alternating(*m, *t_sw, phase_seed.unwrap_or(cfg.params.seed))?
        }
        FlowChoice::Cellular { m } => flows::make_cellular(*m)?,
        FlowChoice::Mixer { levels, per_level_time } => flows::make_multiscale_mixer(*levels, *per_level_time)?,
    };
    Ok(match cfg.flow.mollify {
        Some(delta) => flows::mollify(flow, delta)?,
        None => flow,
    })
}

pub fn flow_at(cfg: &RunConfig, amplitude: f64) -> Result<FlowSpec> {
    Ok(flows::scale_amplitude(base_flow(cfg)?, amplitude)?)
}

/// Amplitude of single-run scenarios: the first listed one, else 1 for a configured flow.
pub fn single_amplitude(cfg: &RunConfig) -> f64 {
    match cfg.params.amplitudes.first() {
        Some(a) => *a,
        None if matches!(cfg.flow.kind, FlowChoice::Zero) => 0.0,
        None => 1.0,
    }
}

pub fn control(cfg: &RunConfig) -> RunControl {
    RunControl {
        diag_stride: cfg.params.diag_stride,
        detector: cfg.detector,
        low_mode_n: cfg.params.low_mode_n,
    }
}

fn horizon(cfg: &RunConfig) -> Result<f64> {
    cfg.params.horizon.ok_or_else(|| {
        ScenarioError::Setup(Error::InvalidParameter {
            name: "horizon",
            reason: "this scenario needs a horizon".into(),
        })
    })
}

fn sup_l2(records: &[DiagnosticsRecord]) -> f64 {
    records.iter().map(|r| r.l2_dev).fold(0.0, f64::max)
}

fn end_time(out: &RunOutput) -> f64 {
    out.final_state.t()
}

/// Non-increasing up to relative round-off.
fn l2_monotone(records: &[DiagnosticsRecord]) -> bool {
    records.windows(2).all(|w| w[1].l2_dev <= w[0].l2_dev * (1.0 + 1e-12))
}

fn amp_label(a: f64) -> String {
    format!("{a}")
}

/// Checks a sequence that should decrease (`strict`) or not increase, tolerating one
/// adjacent inversion of relative size at most [`INVERSION_TOLERANCE`].
fn monotone_with_one_inversion(values: &[f64], strict: bool) -> (bool, String) {
    let mut inversions = Vec::new();
    for (i, w) in values.windows(2).enumerate() {
        let bad = if strict { w[1] >= w[0] } else { w[1] > w[0] };
        if bad {
            let rel = if w[0] > 0.0 { (w[1] - w[0]) / w[0] } else { f64::INFINITY };
            inversions.push((i, rel));
        }
    }
    let pass = match inversions.as_slice() {
        [] => true,
        [(_, rel)] => *rel <= INVERSION_TOLERANCE,
        _ => false,
    };
    let list: Vec<String> = inversions.iter().map(|(i, r)| format!("{}->{} (+{:.2}%)", i, i + 1, 100.0 * r)).collect();
    let detail = format!(
        "{} inversion(s){}; tolerance: at most one adjacent inversion of at most {}%",
        inversions.len(),
        if list.is_empty() { String::new() } else { format!(" at {}", list.join(", ")) },
        100.0 * INVERSION_TOLERANCE
    );
    (pass, detail)
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

// ---------------------------------------------------------------------------------------
// Sweep results

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub amplitude: f64,
    pub termination: Termination,
    pub clause: Option<DetectorClause>,
    /// Time the run stopped (the horizon when it completed).
    pub t_end: f64,
    pub sup_l2: f64,
    pub kappa: Option<f64>,
    pub blowup_time: Option<f64>,
}

impl SweepRow {
    fn from_output(amplitude: f64, out: &RunOutput) -> Self {
        let t_end = end_time(out);
        Self {
            amplitude,
            termination: out.termination,
            clause: out.clause,
            t_end,
            sup_l2: sup_l2(&out.records),
            kappa: None,
            blowup_time: (out.termination != Termination::Completed).then_some(t_end),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Smallest amplitude that completed with `sup ‖ρ - ρ̄‖ ≤ 2B`.
    pub a0_hat: Option<f64>,
    pub b: f64,
    pub horizon: f64,
    /// Zero-flow blow-up time used to derive the horizon, when it was derived.
    pub baseline_time: Option<f64>,
}

impl SweepResult {
    fn new(rows: Vec<SweepRow>, b: f64, horizon: f64, baseline_time: Option<f64>) -> Self {
        let a0_hat = rows
            .iter()
            .find(|r| r.termination == Termination::Completed && r.sup_l2 <= 2.0 * b)
            .map(|r| r.amplitude);
        Self {
            rows,
            a0_hat,
            b,
            horizon,
            baseline_time,
        }
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<Cell>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Num(r.amplitude),
                    Cell::Text(termination_name(r.termination).into()),
                    r.clause.map_or(Cell::Empty, |c| Cell::Text(c.name().into())),
                    Cell::Num(r.t_end),
                    Cell::Num(r.sup_l2),
                    Cell::Num(r.sup_l2 / self.b),
                    Cell::opt(r.kappa),
                    Cell::opt(r.blowup_time),
                ]
            })
            .collect();
        io::table_csv(
            &["amplitude", "termination", "clause", "t_end", "sup_l2", "sup_over_b", "kappa", "blowup_time"],
            &rows,
        )
    }
}

fn b_level(cfg: &RunConfig, rho0: &ScalarField) -> f64 {
    cfg.params
        .b
        .unwrap_or_else(|| solver::SimState::new(rho0.clone()).l2_dev())
}

fn sweep_notes(report: &mut Report, sweep: &SweepResult) {
    report.note(format!("B = {:.6e}, horizon = {:.6e}", sweep.b, sweep.horizon));
    if let Some(t) = sweep.baseline_time {
        report.note(format!(
            "horizon = {HORIZON_FACTOR} x zero-flow blow-up time {t:.6e} of the same data"
        ));
    }
    match sweep.a0_hat {
        Some(a) => report.note(format!("A0_hat = {a} (least amplitude completing with sup L2 deviation <= 2B)")),
        None => report.note("A0_hat absent: no amplitude completed with sup L2 deviation <= 2B"),
    }
}

// ---------------------------------------------------------------------------------------
// run

#[derive(Debug, Clone)]
pub struct RunResult {
    pub amplitude: f64,
    pub output: RunOutput,
    pub initial: ScalarField,
}

pub fn scenario_run(cfg: &RunConfig) -> Result<(RunResult, Report)> {
    let rho0 = initial_field(cfg, cfg.grid.n)?;
    let amplitude = single_amplitude(cfg);
    let flow = flow_at(cfg, amplitude)?;
    let out = solver::run_simulation_with(rho0.clone(), &flow, horizon(cfg)?, &cfg.stepper, &control(cfg))?;

    let mut report = Report::new(ScenarioKind::Run);
    let m0 = out.records[0].mass;
    let scale = if m0.abs() > 0.0 { m0.abs() } else { rho0.max().max(-rho0.min()).max(1.0) };
    let drift = out.records.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max) / scale;
    report.verdict(
        "mass_conservation",
        drift <= 1e-10,
        format!("max relative mass drift {drift:.3e}; tolerance 1e-10"),
    );
    report.note(format!(
        "termination {} at t = {:.6e} after {} steps{}",
        termination_name(out.termination),
        end_time(&out),
        out.steps,
        out.clause.map_or(String::new(), |c| format!(" (detector clause {c})"))
    ));
    report.aborted = out.termination == Termination::Overflow;
    report.text("series.csv", io::records_csv(&out.records));
    report.snapshot("initial.ksmx", &rho0, 0.0);
    report.snapshot("final.ksmx", out.final_state.rho(), end_time(&out));
    let result = RunResult {
        amplitude,
        output: out,
        initial: rho0,
    };
    Ok((result, report.seal(cfg)))
}

// ---------------------------------------------------------------------------------------
// blowup

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupRun {
    pub n: usize,
    pub termination: Termination,
    pub clause: Option<DetectorClause>,
    pub blowup_time: Option<f64>,
    pub t_end: f64,
    pub l2_monotone: bool,
    pub records: Vec<DiagnosticsRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSample {
    pub t: f64,
    pub rate: f64,
    pub leading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupResult {
    pub sweep: SweepResult,
    /// One run per resolution; the first is the base resolution.
    pub runs: Vec<BlowupRun>,
    /// Localized second-moment rate along the base-resolution run.
    pub moments: Vec<MomentSample>,
    pub mass: f64,
    pub supercritical: bool,
    /// `max |t_n - t_finest| / t_finest` over resolutions, when every run blew up.
    pub spread: Option<f64>,
}

pub fn scenario_blowup_baseline(cfg: &RunConfig) -> Result<(BlowupResult, Report)> {
    let t_end = horizon(cfg)?;
    let amplitude = single_amplitude(cfg);
    let flow = flow_at(cfg, amplitude)?;
    let ctl = control(cfg);
    let mass = match &cfg.initial {
        InitialSpec::Gaussian { mass, .. } => *mass,
        _ => initial_field(cfg, cfg.grid.n)?.mean(),
    };
    let supercritical = mass > CRITICAL_MASS_2D;

    let mut report = Report::new(ScenarioKind::BlowupBaseline);
    let mut runs = Vec::new();
    let mut moments = Vec::new();
    let mut base_row = None;
    for (i, n) in cfg.resolutions().into_iter().enumerate() {
        let rho0 = initial_field(cfg, n)?;
        let out = if i == 0 {
            let phi = initdata::radial_cutoff(rho0.grid(), cfg.params.cutoff_radius)?;
            let mut failure = None;
            let out = solver::run_simulation_observed(rho0.clone(), &flow, t_end, &cfg.stepper, &ctl, &mut |state, _| {
                match diagnostics::second_moment_rate(state.rho(), &phi, state.mean()) {
                    Ok((rate, leading)) => moments.push(MomentSample {
                        t: state.t(),
                        rate,
                        leading,
                    }),
                    Err(e) => failure = failure.take().or(Some(e)),
                }
            })?;
            if let Some(e) = failure {
                return Err(e.into());
            }
            report.snapshot("initial.ksmx", &rho0, 0.0);
            report.snapshot("final.ksmx", out.final_state.rho(), end_time(&out));
            base_row = Some(SweepRow::from_output(amplitude, &out));
            out
        } else {
            solver::run_simulation_with(rho0, &flow, t_end, &cfg.stepper, &ctl)?
        };
        report.text(format!("series_n{n}.csv"), io::records_csv(&out.records));
        runs.push(BlowupRun {
            n,
            termination: out.termination,
            clause: out.clause,
            blowup_time: (out.termination != Termination::Completed).then_some(end_time(&out)),
            t_end: end_time(&out),
            l2_monotone: l2_monotone(&out.records),
            records: out.records,
        });
    }

    let times: Option<Vec<f64>> = runs.iter().map(|r| r.blowup_time).collect();
    let spread = times.filter(|t| t.len() >= 2).map(|t| {
        let fine = *t.last().unwrap();
        t.iter().map(|x| (x - fine).abs() / fine).fold(0.0, f64::max)
    });

    let describe = |r: &BlowupRun| {
        format!(
            "n={} {} at t={:.6e}{}",
            r.n,
            termination_name(r.termination),
            r.t_end,
            r.clause.map_or(String::new(), |c| format!(" ({c})"))
        )
    };
    let runs_text: Vec<String> = runs.iter().map(describe).collect();
    if supercritical {
        let fired = runs.iter().all(|r| r.termination == Termination::BlowupDetected);
        report.verdict(
            "detector_fires",
            fired,
            format!("mass {mass} > 8*pi expects detection at every resolution: {}", runs_text.join("; ")),
        );
        if runs.len() >= 2 {
            let ok = spread.is_some_and(|s| s <= REFINEMENT_TOLERANCE);
            report.verdict(
                "refinement_consistency",
                ok,
                format!(
                    "relative spread of blow-up times vs finest grid {}; tolerance {}%",
                    spread.map_or("n/a".to_string(), |s| format!("{:.2}%", 100.0 * s)),
                    100.0 * REFINEMENT_TOLERANCE
                ),
            );
        }
        let rate0 = moments.first().map_or(f64::NAN, |m| m.rate);
        report.verdict(
            "second_moment_rate_negative",
            rate0 < 0.0,
            format!(
                "localized second-moment rate at t=0 is {rate0:.6e} (leading term {:.6e}); must be < 0",
                moments.first().map_or(f64::NAN, |m| m.leading)
            ),
        );
    } else {
        let silent = runs.iter().all(|r| r.termination == Termination::Completed);
        report.verdict(
            "detector_silent",
            silent,
            format!("mass {mass} <= 8*pi expects completion: {}", runs_text.join("; ")),
        );
        let monotone = runs.iter().all(|r| r.l2_monotone);
        report.verdict(
            "l2_monotone_decay",
            monotone,
            "L2 deviation non-increasing along every kept record (relative round-off 1e-12)",
        );
    }

    let moment_rows: Vec<Vec<Cell>> = moments
        .iter()
        .map(|m| vec![Cell::Num(m.t), Cell::Num(m.rate), Cell::Num(m.leading)])
        .collect();
    report.text("second_moment.csv", io::table_csv(&["t", "rate", "leading"], &moment_rows));

    let base_row = base_row.expect("at least one resolution");
    let b = b_level(cfg, &initial_field(cfg, cfg.grid.n)?);
    let sweep = SweepResult::new(vec![base_row], b, t_end, None);
    report.text("sweep.csv", sweep.to_csv());
    let result = BlowupResult {
        sweep,
        runs,
        moments,
        mass,
        supercritical,
        spread,
    };
    Ok((result, report.seal(cfg)))
}

// ---------------------------------------------------------------------------------------
// suppress

pub fn scenario_suppression_sweep(cfg: &RunConfig) -> Result<(SweepResult, Report)> {
    let rho0 = initial_field(cfg, cfg.grid.n)?;
    let b = b_level(cfg, &rho0);
    let ctl = control(cfg);
    let mut report = Report::new(ScenarioKind::SuppressionSweep);

    let (t_end, baseline_time) = match cfg.params.horizon {
        Some(h) => (h, None),
        None => {
            let base = solver::run_simulation_with(rho0.clone(), &flows::make_zero(), BASELINE_CAP, &cfg.stepper, &ctl)?;
            if base.termination == Termination::Completed {
                return Err(ScenarioError::Setup(Error::InvalidParameter {
                    name: "horizon",
                    reason: format!(
                        "the zero-flow run did not blow up before t = {BASELINE_CAP}; set an explicit horizon"
                    ),
                }));
            }
            report.text("series_baseline.csv", io::records_csv(&base.records));
            let t = end_time(&base);
            (HORIZON_FACTOR * t, Some(t))
        }
    };

    let mut rows = Vec::new();
    for (i, &a) in cfg.params.amplitudes.iter().enumerate() {
        let flow = flow_at(cfg, a)?;
        let out = solver::run_simulation_with(rho0.clone(), &flow, t_end, &cfg.stepper, &ctl)?;
        report.text(format!("series_{i:02}_A{}.csv", amp_label(a)), io::records_csv(&out.records));
        report.snapshot(format!("final_{i:02}_A{}.ksmx", amp_label(a)), out.final_state.rho(), end_time(&out));
        rows.push(SweepRow::from_output(a, &out));
    }
    let sweep = SweepResult::new(rows, b, t_end, baseline_time);

    let sups: Vec<f64> = sweep.rows.iter().map(|r| r.sup_l2).collect();
    let (pass, detail) = monotone_with_one_inversion(&sups, false);
    report.verdict(
        "sup_l2_nonincreasing",
        pass,
        format!("sup_t L2 deviation along amplitudes {}: {detail}; ties allowed", fmt_list(&sups)),
    );
    sweep_notes(&mut report, &sweep);
    report.snapshot("initial.ksmx", &rho0, 0.0);
    report.text("sweep.csv", sweep.to_csv());
    Ok((sweep, report.seal(cfg)))
}

// ---------------------------------------------------------------------------------------
// relax

/// Least-squares slope of `-log ‖ρ - ρ̄‖` over kept records with `t ∈ [lo, hi]`.
pub fn fit_decay_rate(records: &[DiagnosticsRecord], lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.t >= lo && r.t <= hi)
        .map(|r| (r.t, r.l2_dev))
        .collect();
    if pts.len() < 3 || pts.iter().any(|p| !(p.1 > 0.0)) {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(sxy, sxx), p| {
        let dx = p.0 - mx;
        (sxy + dx * (p.1.ln() - my), sxx + dx * dx)
    });
    (sxx > 0.0).then(|| -sxy / sxx)
}

pub fn scenario_relaxation_rate(cfg: &RunConfig) -> Result<(SweepResult, Report)> {
    let rho0 = initial_field(cfg, cfg.grid.n)?;
    let b = b_level(cfg, &rho0);
    let t_end = horizon(cfg)?;
    let delta = cfg.params.fit_delta;
    let ctl = control(cfg);
    let mut report = Report::new(ScenarioKind::RelaxationRate);

    let mut rows = Vec::new();
    for (i, &a) in cfg.params.amplitudes.iter().enumerate() {
        let flow = flow_at(cfg, a)?;
        let out = solver::run_simulation_with(rho0.clone(), &flow, t_end, &cfg.stepper, &ctl)?;
        let mut row = SweepRow::from_output(a, &out);
        if out.termination == Termination::Completed {
            row.kappa = fit_decay_rate(&out.records, delta, t_end);
        } else {
            report.note(format!(
                "amplitude {a} did not complete ({}); excluded from the monotonicity check",
                termination_name(out.termination)
            ));
        }
        if row.termination == Termination::Completed && row.kappa.is_none() {
            report.note(format!("amplitude {a}: decay rate not applicable (deviation vanishes)"));
        }
        report.text(format!("series_{i:02}_A{}.csv", amp_label(a)), io::records_csv(&out.records));
        rows.push(row);
    }
    let sweep = SweepResult::new(rows, b, t_end, None);

    let kappas: Vec<f64> = sweep.rows.iter().filter_map(|r| r.kappa).collect();
    let ok = kappas.windows(2).all(|w| w[1] >= w[0]);
    report.verdict(
        "kappa_nondecreasing",
        ok,
        format!(
            "fitted rates over t in [{delta}, {t_end}] along completed amplitudes {}; no tolerance",
            fmt_list(&kappas)
        ),
    );
    sweep_notes(&mut report, &sweep);
    report.text("sweep.csv", sweep.to_csv());
    Ok((sweep, report.seal(cfg)))
}

// ---------------------------------------------------------------------------------------
// approx

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxRow {
    pub amplitude: f64,
    pub window: f64,
    pub sup_distance: f64,
    pub termination: Termination,
    pub samples: Vec<(f64, f64)>,
}

/// Window `τ/A`; a zero flow (or `A = 0`) has no flow time, so it runs for `τ` itself.
pub fn approx_window(tau: f64, amplitude: f64, flow_is_zero: bool) -> f64 {
    if flow_is_zero || amplitude == 0.0 {
        tau
    } else {
        tau / amplitude
    }
}

pub fn scenario_approximation_check(cfg: &RunConfig) -> Result<(Vec<ApproxRow>, Report)> {
    let rho0 = initial_field(cfg, cfg.grid.n)?;
    let zero = base_flow(cfg)?.is_zero();
    let mut report = Report::new(ScenarioKind::ApproximationCheck);
    let mut rows = Vec::new();
    for (i, &a) in cfg.params.amplitudes.iter().enumerate() {
        let flow = flow_at(cfg, a)?;
        let window = approx_window(cfg.params.window, a, zero);
        let res = solver::paired_run(rho0.clone(), &flow, window, &cfg.stepper)?;
        let samples: Vec<Vec<Cell>> = res
            .samples
            .iter()
            .map(|(t, d)| vec![Cell::Num(*t), Cell::Num(*d)])
            .collect();
        report.text(
            format!("paired_{i:02}_A{}.csv", amp_label(a)),
            io::table_csv(&["t", "distance"], &samples),
        );
        if res.termination != Termination::Completed {
            report.note(format!("amplitude {a}: paired run stopped early ({})", termination_name(res.termination)));
        }
        rows.push(ApproxRow {
            amplitude: a,
            window,
            sup_distance: res.sup_distance,
            termination: res.termination,
            samples: res.samples,
        });
    }

    let d: Vec<f64> = rows.iter().map(|r| r.sup_distance).collect();
    if d.iter().all(|x| *x == 0.0) {
        report.verdict("sup_distance_decreasing", true, "all distances vanish (transport and full dynamics agree)");
    } else if zero {
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(l, h), x| (l.min(*x), h.max(*x)));
        report.verdict(
            "distance_independent_of_amplitude",
            hi - lo <= 1e-12 * hi,
            format!("zero flow: distances {} over a fixed window; relative tolerance 1e-12", fmt_list(&d)),
        );
    } else {
        let (pass, detail) = monotone_with_one_inversion(&d, true);
        report.verdict(
            "sup_distance_decreasing",
            pass,
            format!("sup_t distance along amplitudes {}: {detail}", fmt_list(&d)),
        );
    }
    report.note(format!("flow-time window tau = {}", cfg.params.window));
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                Cell::Num(r.amplitude),
                Cell::Num(r.window),
                Cell::Num(r.sup_distance),
                Cell::Text(termination_name(r.termination).into()),
            ]
        })
        .collect();
    report.text(
        "approx.csv",
        io::table_csv(&["amplitude", "window", "sup_distance", "termination"], &table),
    );
    Ok((rows, report.seal(cfg)))
}

// ---------------------------------------------------------------------------------------
// mixbench

#[derive(Debug, Clone, PartialEq)]
pub struct MixSample {
    pub t: f64,
    pub hm1: f64,
    pub linf: f64,
    /// Cell mixedness at levels `1..=max_level`.
    pub mixedness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixTarget {
    pub epsilon: f64,
    /// First sample time with `‖f‖_{Ḣ⁻¹} ≤ ε ‖f₀‖_{Ḣ⁻¹}`.
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityCheck {
    pub level: u32,
    pub mixedness: f64,
    pub eps_eff: f64,
    pub hm1: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixBenchResult {
    pub trace: Vec<MixSample>,
    pub targets: Vec<MixTarget>,
    /// `Ḣ⁻¹` at `t = 0` and at every completed stage boundary.
    pub stage_hm1: Vec<f64>,
    pub max_level: u32,
    pub final_field: ScalarField,
    pub duality: Option<DualityCheck>,
}

impl MixBenchResult {
    pub fn reduction(&self) -> f64 {
        let first = self.trace.first().map_or(0.0, |s| s.hm1);
        let last = self.trace.last().map_or(0.0, |s| s.hm1);
        if first > 0.0 {
            last / first
        } else {
            0.0
        }
    }
}

fn hm1_of(f: &ScalarField) -> f64 {
    to_spectral(f).sobolev_norm(-1.0, NormConvention::Integer)
}

fn mix_sample(f: &ScalarField, t: f64, max_level: u32) -> Result<MixSample> {
    let mean = f.mean();
    let dev = f.map(|v| v - mean);
    let mixedness = (1..=max_level)
        .map(|l| diagnostics::cell_mixedness(&dev, l).map(|r| r.mixedness))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MixSample {
        t,
        hm1: hm1_of(&dev),
        linf: dev.max().max(-dev.min()),
        mixedness,
    })
}

pub fn scenario_mixing_bench(cfg: &RunConfig) -> Result<(MixBenchResult, Report)> {
    let FlowChoice::Mixer { levels, per_level_time } = cfg.flow.kind else {
        return Err(ScenarioError::Setup(Error::InvalidParameter {
            name: "flow",
            reason: "the mixing bench needs the multi-scale mixer".into(),
        }));
    };
    let f0 = initial_field(cfg, cfg.grid.n)?;
    let flow = flow_at(cfg, single_amplitude(cfg))?;
    flow.check_grid(f0.grid())?;
    let schedule = levels as f64 * per_level_time;
    let t_end = cfg.params.horizon.unwrap_or(schedule);
    let max_level = (cfg.grid.n / 4).trailing_zeros();
    let dt = solver::transport_dt(&flow);
    let spacing = 0.5 * per_level_time / MIX_SAMPLES_PER_HALF as f64;
    let samples_per_stage = 2 * MIX_SAMPLES_PER_HALF;
    let count = (t_end / spacing).ceil() as usize;

    let mut f = f0.clone();
    let mut trace = vec![mix_sample(&f, 0.0, max_level)?];
    let mut stage_hm1 = vec![trace[0].hm1];
    for j in 1..=count {
        let (t0, t1) = ((j - 1) as f64 * spacing, (j as f64 * spacing).min(t_end));
        f = solver::advect(&f, &flow, t0, t1, dt, &cfg.stepper)?;
        let s = mix_sample(&f, t1, max_level)?;
        if j % samples_per_stage == 0 {
            stage_hm1.push(s.hm1);
        }
        trace.push(s);
    }

    let h0 = trace[0].hm1;
    let targets: Vec<MixTarget> = cfg
        .params
        .targets
        .iter()
        .map(|&eps| MixTarget {
            epsilon: eps,
            time: (h0 > 0.0)
                .then(|| trace.iter().find(|s| s.hm1 <= eps * h0).map(|s| s.t))
                .flatten(),
        })
        .collect();

    let mut report = Report::new(ScenarioKind::MixingBench);
    let monotone = stage_hm1.windows(2).all(|w| w[1] <= w[0]);
    report.verdict(
        "hm1_decreasing_across_stages",
        monotone,
        format!("H^-1 at stage boundaries {}; no tolerance", fmt_list(&stage_hm1)),
    );

    let last = trace.last().expect("trace starts with t = 0");
    let duality = if h0 > 0.0 && max_level >= 1 {
        let (level, eps_eff) = last
            .mixedness
            .iter()
            .enumerate()
            .map(|(i, m)| ((i + 1) as u32, m.max(0.5f64.powi(i as i32 + 1))))
            .fold((1, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        let mean = f.mean();
        let dev = f.map(|v| v - mean);
        let (hm1, rhs, ratio) = diagnostics::duality_bound_check(&dev, level)?;
        Some(DualityCheck {
            level,
            mixedness: last.mixedness[level as usize - 1],
            eps_eff,
            hm1,
            rhs,
            ratio,
        })
    } else {
        None
    };
    match &duality {
        Some(d) => report.verdict(
            "duality_cross_check",
            d.ratio <= 1.0,
            format!(
                "final H^-1 {:.6e} <= eps_eff*|f|_inf = {:.6e} at level {} (mixedness {:.6e}, eps_eff {:.6e}); ratio {:.4} must be <= 1",
                d.hm1, d.rhs, d.level, d.mixedness, d.eps_eff, d.ratio
            ),
        ),
        None => report.verdict("duality_cross_check", true, "initial data already mixed (H^-1 = 0); nothing to check"),
    }
    let ratio = if h0 > 0.0 { last.hm1 / h0 } else { 0.0 };
    report.note(format!("H^-1 reduction over [0, {t_end}]: final/initial = {ratio:.6e}"));
    if h0 > 0.0 && last.linf > 0.0 {
        let eps = last.hm1 / last.linf;
        let advertised = (2.0 * eps.log2()).abs().ceil() as u32 + 2;
        report.note(format!(
            "achieved eps = H^-1/|f|_inf = {eps:.4e}; advertised dyadic level {advertised}{}",
            if advertised > max_level {
                format!(" exceeds the finest resolvable level {max_level} at n = {}", cfg.grid.n)
            } else {
                String::new()
            }
        ));
    }

    let mut header = vec!["t".to_string(), "hm1".into(), "linf".into()];
    header.extend((1..=max_level).map(|l| format!("mixedness_{l}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<Cell>> = trace
        .iter()
        .map(|s| {
            let mut r = vec![Cell::Num(s.t), Cell::Num(s.hm1), Cell::Num(s.linf)];
            r.extend(s.mixedness.iter().map(|m| Cell::Num(*m)));
            r
        })
        .collect();
    report.text("mix_trace.csv", io::table_csv(&header_refs, &rows));
    let target_rows: Vec<Vec<Cell>> = targets
        .iter()
        .map(|t| {
            vec![
                Cell::Num(t.epsilon),
                Cell::opt(t.time),
                Cell::Num(t.epsilon.ln()),
                Cell::opt(t.time.filter(|x| *x > 0.0).map(f64::ln)),
            ]
        })
        .collect();
    report.text(
        "scaling.csv",
        io::table_csv(&["epsilon", "time", "ln_epsilon", "ln_time"], &target_rows),
    );
    report.snapshot("initial.ksmx", &f0, 0.0);
    report.snapshot("final.ksmx", &f, t_end);

    let result = MixBenchResult {
        trace,
        targets,
        stage_hm1,
        max_level,
        final_field: f,
        duality,
    };
    Ok((result, report.seal(cfg)))
}

// ---------------------------------------------------------------------------------------
// ineq

#[derive(Debug, Clone, PartialEq)]
pub struct IneqRow {
    pub name: &'static str,
    pub n: usize,
    pub count: usize,
    pub finite: usize,
    pub max: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IneqResult {
    pub rows: Vec<IneqRow>,
    /// Per inequality: largest ratio of ensemble maxima between consecutive resolutions.
    pub stability: Vec<(&'static str, f64)>,
    /// Largest relative change of any ratio under `f ↦ λf`.
    pub homogeneity: f64,
}

pub fn inequalities(cfg: &RunConfig) -> Vec<(&'static str, Inequality)> {
    let p = &cfg.params;
    vec![
        (
            "gagliardo_nirenberg",
            Inequality::GagliardoNirenberg {
                m: p.gn.0,
                p: p.gn.1,
                n_ord: p.gn.2,
            },
        ),
        ("nash", Inequality::Nash { s: p.nash_s }),
        (
            "vanishing_gn",
            Inequality::VanishingGn {
                q: p.vanishing_gn.0,
                r: p.vanishing_gn.1,
            },
        ),
        ("sobolev_interp", Inequality::SobolevInterp { s: p.interp_s }),
    ]
}

/// Member `i` of the seeded ensemble of random smooth mean-zero fields.
pub fn ensemble_field(cfg: &RunConfig, n: usize, i: usize) -> Result<ScalarField> {
    let InitialSpec::Random { decay, .. } = cfg.initial else {
        return Err(ScenarioError::Setup(Error::InvalidParameter {
            name: "initial",
            reason: "the inequality suite needs random initial data".into(),
        }));
    };
    let grid = Grid::new(cfg.grid.dim, n)?;
    Ok(initdata::random_smooth_field(grid, rng::hash2(cfg.params.seed, i as u64), decay)?)
}

const HOMOGENEITY_SCALE: f64 = 3.75;

pub fn scenario_ineq_suite(cfg: &RunConfig) -> Result<(IneqResult, Report)> {
    let which = inequalities(cfg);
    let dim = cfg.grid.dim;
    diagnostics::gn_exponent(dim, cfg.params.gn.0, cfg.params.gn.1, cfg.params.gn.2)?;
    diagnostics::vanishing_gn_exponent(dim, cfg.params.vanishing_gn.0, cfg.params.vanishing_gn.1)?;

    let resolutions = cfg.resolutions();
    let mut rows = Vec::new();
    let mut homogeneity: f64 = 0.0;
    for (ri, &n) in resolutions.iter().enumerate() {
        let mut ratios: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.params.ensemble); which.len()];
        for i in 0..cfg.params.ensemble {
            let f = ensemble_field(cfg, n, i)?;
            let scaled = (ri == 0).then(|| f.scaled(HOMOGENEITY_SCALE));
            for (k, (_, ineq)) in which.iter().enumerate() {
                let r = diagnostics::inequality_ratios(&f, *ineq)?;
                if let Some(g) = &scaled {
                    let rs = diagnostics::inequality_ratios(g, *ineq)?;
                    let dev = if r != 0.0 { ((rs - r) / r).abs() } else { rs.abs() };
                    homogeneity = homogeneity.max(if dev.is_nan() { f64::INFINITY } else { dev });
                }
                ratios[k].push(r);
            }
        }
        for ((name, _), mut v) in which.iter().zip(ratios) {
            let finite = v.iter().filter(|x| x.is_finite()).count();
            v.retain(|x| x.is_finite());
            v.sort_by(f64::total_cmp);
            let median = if v.is_empty() {
                f64::NAN
            } else if v.len() % 2 == 1 {
                v[v.len() / 2]
            } else {
                0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
            };
            rows.push(IneqRow {
                name,
                n,
                count: cfg.params.ensemble,
                finite,
                max: v.last().copied().unwrap_or(f64::NAN),
                median,
            });
        }
    }

    let mut report = Report::new(ScenarioKind::IneqSuite);
    let mut stability = Vec::new();
    for (name, _) in &which {
        let mine: Vec<&IneqRow> = rows.iter().filter(|r| r.name == *name).collect();
        let all_finite = mine.iter().all(|r| r.finite == r.count);
        let maxima: Vec<String> = mine.iter().map(|r| format!("n={}: {:.6e}", r.n, r.max)).collect();
        report.verdict(
            format!("{name}_finite"),
            all_finite,
            format!("every ratio finite; ensemble maxima {}", maxima.join(", ")),
        );
        let factor = mine
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].max, w[1].max);
                (a / b).max(b / a)
            })
            .fold(1.0, |m: f64, x| if x.is_nan() { f64::INFINITY } else { m.max(x) });
        if mine.len() >= 2 {
            report.verdict(
                format!("{name}_refinement_stability"),
                factor <= STABILITY_FACTOR,
                format!("max-ratio factor between consecutive resolutions {factor:.4}; tolerance {STABILITY_FACTOR}x"),
            );
        }
        stability.push((*name, factor));
    }
    report.verdict(
        "homogeneity",
        homogeneity <= HOMOGENEITY_TOLERANCE,
        format!(
            "max relative change under f -> {HOMOGENEITY_SCALE} f is {homogeneity:.3e}; tolerance {HOMOGENEITY_TOLERANCE:e}"
        ),
    );

    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                Cell::Text(r.name.into()),
                Cell::Int(r.n as i64),
                Cell::Int(r.count as i64),
                Cell::Int(r.finite as i64),
                Cell::Num(r.max),
                Cell::Num(r.median),
            ]
        })
        .collect();
    report.text(
        "ineq.csv",
        io::table_csv(&["inequality", "n", "count", "finite", "max", "median"], &table),
    );
    let result = IneqResult {
        rows,
        stability,
        homogeneity,
    };
    Ok((result, report.seal(cfg)))
}

// ---------------------------------------------------------------------------------------

/// Runs the scenario named by `cfg.scenario` and returns its report.
pub fn run_scenario(cfg: &RunConfig) -> Result<Report> {
    Ok(match cfg.scenario {
        ScenarioKind::Run => scenario_run(cfg)?.1,
        ScenarioKind::BlowupBaseline => scenario_blowup_baseline(cfg)?.1,
        ScenarioKind::SuppressionSweep => scenario_suppression_sweep(cfg)?.1,
        ScenarioKind::RelaxationRate => scenario_relaxation_rate(cfg)?.1,
        ScenarioKind::ApproximationCheck => scenario_approximation_check(cfg)?.1,
        ScenarioKind::MixingBench => scenario_mixing_bench(cfg)?.1,
        ScenarioKind::IneqSuite => scenario_ineq_suite(cfg)?.1,
    })
}

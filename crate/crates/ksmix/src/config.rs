//! Line-based `key = value` run configuration with `[section]` headers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ksmix_core::diagnostics::DetectorConfig;
use ksmix_core::solver::StepperConfig;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: cannot parse `{text}` (expected `key = value` or `[section]`)")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: key `{key}` appears twice in [{section}]")]
    Duplicate { line: usize, section: String, key: String },
    #[error("line {line}: `{key}` expects {expected}, got `{value}`")]
    TypeMismatch {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },
    #[error("missing required key `{key}` in [{section}] ({location})")]
    Missing { section: String, key: String, location: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Run,
    BlowupBaseline,
    SuppressionSweep,
    RelaxationRate,
    ApproximationCheck,
    MixingBench,
    IneqSuite,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::Run,
        ScenarioKind::BlowupBaseline,
        ScenarioKind::SuppressionSweep,
        ScenarioKind::RelaxationRate,
        ScenarioKind::ApproximationCheck,
        ScenarioKind::MixingBench,
        ScenarioKind::IneqSuite,
    ];

    /// Name used both as the CLI subcommand and as `[scenario] kind`.
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Run => "run",
            ScenarioKind::BlowupBaseline => "blowup",
            ScenarioKind::SuppressionSweep => "suppress",
            ScenarioKind::RelaxationRate => "relax",
            ScenarioKind::ApproximationCheck => "approx",
            ScenarioKind::MixingBench => "mixbench",
            ScenarioKind::IneqSuite => "ineq",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Gaussian { mass: f64, width: f64, center: Vec<f64> },
    Constant { value: f64 },
    /// `mean + amplitude · sin(2π mode·x)`.
    Sine { mean: f64, amplitude: f64, mode: Vec<i64> },
    /// `mean + amplitude · g / max|g|` for a seeded random smooth mean-zero `g`.
    Random { mean: f64, amplitude: f64, decay: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowChoice {
    Zero,
    Uniform { velocity: Vec<f64> },
    /// `phase_seed = None` takes the scenario seed.
    Shear { m: u32, t_sw: f64, phase_seed: Option<u64> },
    Cellular { m: u32 },
    Mixer { levels: u32, per_level_time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub kind: FlowChoice,
    pub mollify: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub amplitudes: Vec<f64>,
    pub horizon: Option<f64>,
    pub seed: u64,
    pub diag_stride: usize,
    pub low_mode_n: usize,
    pub output: Option<String>,
    /// Absorbing-set level `B`; `None` uses `‖ρ₀ - ρ̄‖_{L²}`.
    pub b: Option<f64>,
    pub c0: f64,
    pub c1: f64,
    pub fit_delta: f64,
    /// Flow-time budget `τ` of the approximation check; each amplitude runs for `τ/A`.
    pub window: f64,
    pub ensemble: usize,
    /// Empty means `[n, 2n]`.
    pub resolutions: Vec<usize>,
    pub targets: Vec<f64>,
    pub cutoff_radius: f64,
    pub gn: (u32, f64, u32),
    pub nash_s: f64,
    pub vanishing_gn: (f64, f64),
    pub interp_s: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            amplitudes: Vec::new(),
            horizon: None,
            seed: 0,
            diag_stride: 10,
            low_mode_n: 4,
            output: None,
            b: None,
            c0: 1.0,
            c1: 1.0,
            fit_delta: 0.0,
            window: 0.1,
            ensemble: 1000,
            resolutions: Vec::new(),
            targets: vec![0.5, 0.25, 0.125, 0.0625],
            cutoff_radius: 0.2,
            gn: (1, 4.0, 2),
            nash_s: 1.0,
            vanishing_gn: (3.0, 2.0),
            interp_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub grid: GridConfig,
    pub initial: InitialSpec,
    pub flow: FlowConfig,
    pub stepper: StepperConfig,
    pub detector: DetectorConfig,
    pub params: ScenarioParams,
}

impl RunConfig {
    pub fn resolutions(&self) -> Vec<usize> {
        if self.params.resolutions.is_empty() {
            vec![self.grid.n, 2 * self.grid.n]
        } else {
            self.params.resolutions.clone()
        }
    }

    /// Applies the CLI overrides; a new resolution also resets an explicit refinement list.
    pub fn apply_overrides(&mut self, resolution: Option<usize>, seed: Option<u64>) {
        if let Some(n) = resolution {
            self.grid.n = n;
            self.params.resolutions.clear();
        }
        if let Some(s) = seed {
            self.params.seed = s;
        }
    }

    pub fn to_text(&self) -> String {
        serialize(self)
    }
}

pub const CONFIG_REFERENCE: &str = "\
CONFIG FILE (key = value, [section] headers, '#' comments, lists comma-separated)
  [grid]      dim = 2 | 3 (default 2); n = power of two in 16..=2048 (required)
  [initial]   kind = gaussian | constant | sine | random (required)
              gaussian: mass (required), width (required), center (default origin)
              constant: value (required)
              sine:     mean (0), amplitude (1), mode (1,0[,0])
              random:   mean (1), amplitude (0.5), decay (3)
  [flow]      kind = zero | uniform | shear | cellular | mixer (default zero)
              uniform: velocity (required); shear: m (1), t_sw (1e-4), phase_seed (scenario seed)
              cellular: m (1); mixer: levels (4), per_level_time (16)
              mollify = delta in (0, 1/4) (default off)
  [stepper]   dt_max (1e-3), cfl (0.5), dealias_fraction (0.6666666666666666),
              negative_tolerance (1e-8), hyperdiffusion_for_transport (0),
              chemotaxis (true), min_dt (1e-13)
  [detector]  criterion_cap (1e4), h1_cap (1e6), tail_cap (0.1), neg_cap (1e-3)
  [scenario]  kind (defaults to the subcommand; must match it when given)
              amplitudes (sorted ascending), horizon, seed (0), diag_stride (10),
              low_mode_n (4), output, b (initial L2 deviation), c0 (1), c1 (1),
              fit_delta (0), window (0.1), ensemble (1000), resolutions (n, 2n),
              targets (0.5,0.25,0.125,0.0625), cutoff_radius (0.2),
              gn = m,p,n (1,4,2), nash_s (1), vanishing_gn = q,r (3,2), interp_s (1)
";

const SECTIONS: [&str; 6] = ["grid", "initial", "flow", "stepper", "detector", "scenario"];

fn known_keys(section: &str) -> &'static [&'static str] {
    match section {
        "grid" => &["dim", "n"],
        "initial" => &["kind", "mass", "width", "center", "value", "mean", "amplitude", "mode", "decay"],
        "flow" => &["kind", "velocity", "m", "t_sw", "phase_seed", "levels", "per_level_time", "mollify"],
        "stepper" => &[
            "dt_max",
            "cfl",
            "dealias_fraction",
            "negative_tolerance",
            "hyperdiffusion_for_transport",
            "chemotaxis",
            "min_dt",
        ],
        "detector" => &["criterion_cap", "h1_cap", "tail_cap", "neg_cap"],
        "scenario" => &[
            "kind",
            "amplitudes",
            "horizon",
            "seed",
            "diag_stride",
            "low_mode_n",
            "output",
            "b",
            "c0",
            "c1",
            "fit_delta",
            "window",
            "ensemble",
            "resolutions",
            "targets",
            "cutoff_radius",
            "gn",
            "nash_s",
            "vanishing_gn",
            "interp_s",
        ],
        _ => &[],
    }
}

struct Entry {
    value: String,
    line: usize,
}

struct Table {
    entries: BTreeMap<(String, String), Entry>,
    section_lines: BTreeMap<String, usize>,
    last_line: usize,
}

impl Table {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section_lines = BTreeMap::new();
        let mut section: Option<String> = None;
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax {
                        line,
                        text: content.to_string(),
                    })?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError::UnknownSection {
                        line,
                        section: name.to_string(),
                    });
                }
                section_lines.entry(name.to_string()).or_insert(line);
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: content.to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let Some(sec) = section.clone() else {
                return Err(ConfigError::Invalid {
                    line,
                    message: format!("key `{key}` appears before any [section] header"),
                });
            };
            if !known_keys(&sec).contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    section: sec,
                    key: key.to_string(),
                });
            }
            let slot = (sec.clone(), key.to_string());
            if entries.contains_key(&slot) {
                return Err(ConfigError::Duplicate {
                    line,
                    section: sec,
                    key: key.to_string(),
                });
            }
            entries.insert(
                slot,
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(Self {
            entries,
            section_lines,
            last_line,
        })
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn line_of(&self, section: &str, key: &str) -> usize {
        self.entry(section, key)
            .map(|e| e.line)
            .or_else(|| self.section_lines.get(section).copied())
            .unwrap_or(self.last_line)
    }

    fn missing(&self, section: &str, key: &str) -> ConfigError {
        let location = match self.section_lines.get(section) {
            Some(l) => format!("section starts at line {l}"),
            None => format!("no [{section}] section in the file"),
        };
        ConfigError::Missing {
            section: section.to_string(),
            key: key.to_string(),
            location,
        }
    }

    fn get<T>(&self, section: &str, key: &str, expected: &'static str, conv: impl Fn(&str) -> Option<T>) -> Result<Option<T>, ConfigError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => conv(&e.value).map(Some).ok_or_else(|| ConfigError::TypeMismatch {
                line: e.line,
                key: key.to_string(),
                expected,
                value: e.value.clone(),
            }),
        }
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(section, key, "a real number", parse_f64)
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(section, key)?.unwrap_or(default))
    }

    fn f64_req(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        self.f64(section, key)?.ok_or_else(|| self.missing(section, key))
    }

    fn uint<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError> {
        self.get(section, key, "a nonnegative integer", |s| s.parse::<T>().ok())
    }

    fn bool(&self, section: &str, key: &str) -> Result<Option<bool>, ConfigError> {
        self.get(section, key, "true or false", |s| match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }

    fn list<T>(&self, section: &str, key: &str, expected: &'static str, conv: impl Fn(&str) -> Option<T>) -> Result<Option<Vec<T>>, ConfigError> {
        self.get(section, key, expected, |s| {
            if s.is_empty() {
                return Some(Vec::new());
            }
            s.split(',').map(|p| conv(p.trim())).collect()
        })
    }

    fn f64_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.list(section, key, "a comma-separated list of real numbers", parse_f64)
    }

    fn string(&self, section: &str, key: &str) -> Option<String> {
        self.entry(section, key).map(|e| e.value.clone())
    }

    fn invalid(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            line: self.line_of(section, key),
            message: message.into(),
        }
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| !v.is_nan())
}

/// Parses a configuration whose scenario is taken from `[scenario] kind`.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_for(text, None)
}

/// Parses a configuration for a subcommand; a `[scenario] kind` in the file must agree with it.
pub fn parse_config_for(text: &str, subcommand: Option<ScenarioKind>) -> Result<RunConfig, ConfigError> {
    let t = Table::parse(text)?;

    let scenario = match (t.string("scenario", "kind"), subcommand) {
        (Some(name), sub) => {
            let kind = ScenarioKind::from_name(&name).ok_or_else(|| ConfigError::TypeMismatch {
                line: t.line_of("scenario", "kind"),
                key: "kind".into(),
                expected: "one of run, blowup, suppress, relax, approx, mixbench, ineq",
                value: name.clone(),
            })?;
            if let Some(sub) = sub {
                if sub != kind {
                    return Err(t.invalid(
                        "scenario",
                        "kind",
                        format!("config is for `{}` but the `{}` subcommand was used", kind.name(), sub.name()),
                    ));
                }
            }
            kind
        }
        (None, Some(sub)) => sub,
        (None, None) => return Err(t.missing("scenario", "kind")),
    };

    let dim = t.uint::<usize>("grid", "dim")?.unwrap_or(2);
    if dim != 2 && dim != 3 {
        return Err(t.invalid("grid", "dim", "dim must be 2 or 3"));
    }
    let n = t.uint::<usize>("grid", "n")?.ok_or_else(|| t.missing("grid", "n"))?;
    if !n.is_power_of_two() || !(16..=2048).contains(&n) {
        return Err(t.invalid("grid", "n", "n must be a power of two in 16..=2048"));
    }
    let grid = GridConfig { dim, n };

    let initial = match t.string("initial", "kind").as_deref() {
        None => return Err(t.missing("initial", "kind")),
        Some("gaussian") => {
            let center = t.f64_list("initial", "center")?.unwrap_or_else(|| vec![0.0; dim]);
            if center.len() != dim {
                return Err(t.invalid("initial", "center", format!("center needs {dim} coordinates")));
            }
            InitialSpec::Gaussian {
                mass: t.f64_req("initial", "mass")?,
                width: t.f64_req("initial", "width")?,
                center,
            }
        }
        Some("constant") => InitialSpec::Constant {
            value: t.f64_req("initial", "value")?,
        },
        Some("sine") => {
            let mut default_mode = vec![0i64; dim];
            default_mode[0] = 1;
            let mode = t
                .list("initial", "mode", "a comma-separated list of integers", |s| s.parse::<i64>().ok())?
                .unwrap_or(default_mode);
            if mode.len() != dim {
                return Err(t.invalid("initial", "mode", format!("mode needs {dim} integers")));
            }
            InitialSpec::Sine {
                mean: t.f64_or("initial", "mean", 0.0)?,
                amplitude: t.f64_or("initial", "amplitude", 1.0)?,
                mode,
            }
        }
        Some("random") => InitialSpec::Random {
            mean: t.f64_or("initial", "mean", 1.0)?,
            amplitude: t.f64_or("initial", "amplitude", 0.5)?,
            decay: t.f64_or("initial", "decay", 3.0)?,
        },
        Some(other) => {
            return Err(ConfigError::TypeMismatch {
                line: t.line_of("initial", "kind"),
                key: "kind".into(),
                expected: "one of gaussian, constant, sine, random",
                value: other.to_string(),
            })
        }
    };

    let m = t.uint::<u32>("flow", "m")?.unwrap_or(1);
    let kind = match t.string("flow", "kind").as_deref() {
        None | Some("zero") => FlowChoice::Zero,
        Some("uniform") => {
            let velocity = t.f64_list("flow", "velocity")?.ok_or_else(|| t.missing("flow", "velocity"))?;
            if velocity.len() != dim {
                return Err(t.invalid("flow", "velocity", format!("velocity needs {dim} components")));
            }
            FlowChoice::Uniform { velocity }
        }
        Some("shear") => FlowChoice::Shear {
            m,
            t_sw: t.f64_or("flow", "t_sw", 1e-4)?,
            phase_seed: t.uint::<u64>("flow", "phase_seed")?,
        },
        Some("cellular") => FlowChoice::Cellular { m },
        Some("mixer") => FlowChoice::Mixer {
            levels: t.uint::<u32>("flow", "levels")?.unwrap_or(4),
            per_level_time: t.f64_or("flow", "per_level_time", 16.0)?,
        },
        Some(other) => {
            return Err(ConfigError::TypeMismatch {
                line: t.line_of("flow", "kind"),
                key: "kind".into(),
                expected: "one of zero, uniform, shear, cellular, mixer",
                value: other.to_string(),
            })
        }
    };
    let flow = FlowConfig {
        kind,
        mollify: t.f64("flow", "mollify")?,
    };

    let d = StepperConfig::default();
    let stepper = StepperConfig {
        dt_max: t.f64_or("stepper", "dt_max", d.dt_max)?,
        cfl: t.f64_or("stepper", "cfl", d.cfl)?,
        dealias_fraction: t.f64_or("stepper", "dealias_fraction", d.dealias_fraction)?,
        negative_tolerance: t.f64_or("stepper", "negative_tolerance", d.negative_tolerance)?,
        hyperdiffusion_for_transport: t.f64_or("stepper", "hyperdiffusion_for_transport", d.hyperdiffusion_for_transport)?,
        chemotaxis: t.bool("stepper", "chemotaxis")?.unwrap_or(d.chemotaxis),
        min_dt: t.f64_or("stepper", "min_dt", d.min_dt)?,
    };
    stepper.validate().map_err(|e| {
        let key = match &e {
            ksmix_core::Error::InvalidParameter { name, .. } => *name,
            _ => "dt_max",
        };
        t.invalid("stepper", key, format!("invalid [stepper]: {e}"))
    })?;

    let dd = DetectorConfig::default();
    let detector = DetectorConfig {
        criterion_cap: t.f64_or("detector", "criterion_cap", dd.criterion_cap)?,
        h1_cap: t.f64_or("detector", "h1_cap", dd.h1_cap)?,
        tail_cap: t.f64_or("detector", "tail_cap", dd.tail_cap)?,
        neg_cap: t.f64_or("detector", "neg_cap", dd.neg_cap)?,
    };

    let p = ScenarioParams::default();
    let gn = match t.list("scenario", "gn", "three numbers m, p, n", parse_f64)? {
        None => p.gn,
        Some(v) if v.len() == 3 && v[0] >= 0.0 && v[0].fract() == 0.0 && v[2] >= 0.0 && v[2].fract() == 0.0 => {
            (v[0] as u32, v[1], v[2] as u32)
        }
        Some(_) => return Err(t.invalid("scenario", "gn", "gn needs integers m, n and a real p: `m, p, n`")),
    };
    let vanishing_gn = match t.f64_list("scenario", "vanishing_gn")? {
        None => p.vanishing_gn,
        Some(v) if v.len() == 2 => (v[0], v[1]),
        Some(_) => return Err(t.invalid("scenario", "vanishing_gn", "vanishing_gn needs two numbers `q, r`")),
    };
    let params = ScenarioParams {
        amplitudes: t.f64_list("scenario", "amplitudes")?.unwrap_or_default(),
        horizon: t.f64("scenario", "horizon")?,
        seed: t.uint::<u64>("scenario", "seed")?.unwrap_or(p.seed),
        diag_stride: t.uint::<usize>("scenario", "diag_stride")?.unwrap_or(p.diag_stride),
        low_mode_n: t.uint::<usize>("scenario", "low_mode_n")?.unwrap_or(p.low_mode_n),
        output: t.string("scenario", "output"),
        b: t.f64("scenario", "b")?,
        c0: t.f64_or("scenario", "c0", p.c0)?,
        c1: t.f64_or("scenario", "c1", p.c1)?,
        fit_delta: t.f64_or("scenario", "fit_delta", p.fit_delta)?,
        window: t.f64_or("scenario", "window", p.window)?,
        ensemble: t.uint::<usize>("scenario", "ensemble")?.unwrap_or(p.ensemble),
        resolutions: t
            .list("scenario", "resolutions", "a comma-separated list of integers", |s| s.parse::<usize>().ok())?
            .unwrap_or_default(),
        targets: t.f64_list("scenario", "targets")?.unwrap_or(p.targets),
        cutoff_radius: t.f64_or("scenario", "cutoff_radius", p.cutoff_radius)?,
        gn,
        nash_s: t.f64_or("scenario", "nash_s", p.nash_s)?,
        vanishing_gn,
        interp_s: t.f64_or("scenario", "interp_s", p.interp_s)?,
    };

    let cfg = RunConfig {
        scenario,
        grid,
        initial,
        flow,
        stepper,
        detector,
        params,
    };
    validate(&cfg, &t)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig, t: &Table) -> Result<(), ConfigError> {
    let p = &cfg.params;
    if p.amplitudes.windows(2).any(|w| w[1] < w[0]) {
        return Err(t.invalid("scenario", "amplitudes", "amplitudes must be sorted ascending"));
    }
    if p.amplitudes.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(t.invalid("scenario", "amplitudes", "amplitudes must be finite and nonnegative"));
    }
    if let Some(h) = p.horizon {
        if !(h > 0.0 && h.is_finite()) {
            return Err(t.invalid("scenario", "horizon", "horizon must be positive"));
        }
    }
    if p.diag_stride == 0 {
        return Err(t.invalid("scenario", "diag_stride", "diag_stride must be at least 1"));
    }
    if p.resolutions.iter().any(|n| !n.is_power_of_two() || !(16..=2048).contains(n)) {
        return Err(t.invalid("scenario", "resolutions", "resolutions must be powers of two in 16..=2048"));
    }
    let needs = |key: &str, ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Invalid {
                line: t.line_of("scenario", key),
                message: format!("scenario `{}` requires {what}", cfg.scenario.name()),
            })
        }
    };
    let gaussian_2d = cfg.grid.dim == 2 && matches!(cfg.initial, InitialSpec::Gaussian { .. });
    match cfg.scenario {
        ScenarioKind::Run => {
            needs("horizon", p.horizon.is_some(), "`horizon`")?;
            needs("amplitudes", p.amplitudes.len() <= 1, "at most one amplitude")?;
        }
        ScenarioKind::BlowupBaseline => {
            needs("horizon", p.horizon.is_some(), "`horizon`")?;
            needs("kind", gaussian_2d, "a 2D gaussian initial density")?;
        }
        ScenarioKind::SuppressionSweep => {
            needs("amplitudes", !p.amplitudes.is_empty(), "a nonempty `amplitudes` list")?;
        }
        ScenarioKind::RelaxationRate => {
            needs("amplitudes", !p.amplitudes.is_empty(), "a nonempty `amplitudes` list")?;
            needs("horizon", p.horizon.is_some(), "`horizon`")?;
            needs(
                "fit_delta",
                p.fit_delta >= 0.0 && p.horizon.map_or(true, |h| p.fit_delta < h),
                "0 <= fit_delta < horizon",
            )?;
        }
        ScenarioKind::ApproximationCheck => {
            needs("amplitudes", !p.amplitudes.is_empty(), "a nonempty `amplitudes` list")?;
            needs("window", p.window > 0.0 && p.window.is_finite(), "a positive `window`")?;
        }
        ScenarioKind::MixingBench => {
            needs("kind", cfg.grid.dim == 2, "a 2D grid")?;
            needs("kind", matches!(cfg.flow.kind, FlowChoice::Mixer { .. }), "`[flow] kind = mixer`")?;
            needs("targets", p.targets.iter().all(|e| *e > 0.0), "positive `targets`")?;
        }
        ScenarioKind::IneqSuite => {
            needs("ensemble", p.ensemble >= 1, "`ensemble` >= 1")?;
            needs("kind", matches!(cfg.initial, InitialSpec::Random { .. }), "`[initial] kind = random`")?;
        }
    }
    Ok(())
}

fn join<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

/// Canonical text form; `{:?}` floats are shortest round-trip representations.
pub fn serialize(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let p = &cfg.params;
    let _ = writeln!(s, "[scenario]\nkind = {}", cfg.scenario.name());
    if !p.amplitudes.is_empty() {
        let _ = writeln!(s, "amplitudes = {}", join(&p.amplitudes));
    }
    if let Some(h) = p.horizon {
        let _ = writeln!(s, "horizon = {h:?}");
    }
    let _ = writeln!(s, "seed = {}\ndiag_stride = {}\nlow_mode_n = {}", p.seed, p.diag_stride, p.low_mode_n);
    if let Some(o) = &p.output {
        let _ = writeln!(s, "output = {o}");
    }
    if let Some(b) = p.b {
        let _ = writeln!(s, "b = {b:?}");
    }
    let _ = writeln!(
        s,
        "c0 = {:?}\nc1 = {:?}\nfit_delta = {:?}\nwindow = {:?}\nensemble = {}",
        p.c0, p.c1, p.fit_delta, p.window, p.ensemble
    );
    if !p.resolutions.is_empty() {
        let _ = writeln!(s, "resolutions = {}", join(&p.resolutions));
    }
    let _ = writeln!(
        s,
        "targets = {}\ncutoff_radius = {:?}\ngn = {}, {:?}, {}\nnash_s = {:?}\nvanishing_gn = {:?}, {:?}\ninterp_s = {:?}",
        join(&p.targets),
        p.cutoff_radius,
        p.gn.0,
        p.gn.1,
        p.gn.2,
        p.nash_s,
        p.vanishing_gn.0,
        p.vanishing_gn.1,
        p.interp_s
    );

    let _ = writeln!(s, "\n[grid]\ndim = {}\nn = {}", cfg.grid.dim, cfg.grid.n);

    let _ = writeln!(s, "\n[initial]");
    match &cfg.initial {
        InitialSpec::Gaussian { mass, width, center } => {
            let _ = writeln!(s, "kind = gaussian\nmass = {mass:?}\nwidth = {width:?}\ncenter = {}", join(center));
        }
        InitialSpec::Constant { value } => {
            let _ = writeln!(s, "kind = constant\nvalue = {value:?}");
        }
        InitialSpec::Sine { mean, amplitude, mode } => {
            let _ = writeln!(s, "kind = sine\nmean = {mean:?}\namplitude = {amplitude:?}\nmode = {}", join(mode));
        }
        InitialSpec::Random { mean, amplitude, decay } => {
            let _ = writeln!(s, "kind = random\nmean = {mean:?}\namplitude = {amplitude:?}\ndecay = {decay:?}");
        }
    }

    let _ = writeln!(s, "\n[flow]");
    match &cfg.flow.kind {
        FlowChoice::Zero => {
            let _ = writeln!(s, "kind = zero");
        }
        FlowChoice::Uniform { velocity } => {
            let _ = writeln!(s, "kind = uniform\nvelocity = {}", join(velocity));
        }
        FlowChoice::Shear { m, t_sw, phase_seed } => {
            let _ = writeln!(s, "kind = shear\nm = {m}\nt_sw = {t_sw:?}");
            if let Some(ps) = phase_seed {
                let _ = writeln!(s, "phase_seed = {ps}");
            }
        }
        FlowChoice::Cellular { m } => {
            let _ = writeln!(s, "kind = cellular\nm = {m}");
        }
        FlowChoice::Mixer { levels, per_level_time } => {
            let _ = writeln!(s, "kind = mixer\nlevels = {levels}\nper_level_time = {per_level_time:?}");
        }
    }
    if let Some(d) = cfg.flow.mollify {
        let _ = writeln!(s, "mollify = {d:?}");
    }

    let st = &cfg.stepper;
    let _ = writeln!(
        s,
        "\n[stepper]\ndt_max = {:?}\ncfl = {:?}\ndealias_fraction = {:?}\nnegative_tolerance = {:?}\nhyperdiffusion_for_transport = {:?}\nchemotaxis = {}\nmin_dt = {:?}",
        st.dt_max, st.cfl, st.dealias_fraction, st.negative_tolerance, st.hyperdiffusion_for_transport, st.chemotaxis, st.min_dt
    );
    let d = &cfg.detector;
    let _ = writeln!(
        s,
        "\n[detector]\ncriterion_cap = {:?}\nh1_cap = {:?}\ntail_cap = {:?}\nneg_cap = {:?}",
        d.criterion_cap, d.h1_cap, d.tail_cap, d.neg_cap
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nn = 64\n[initial]\nkind = constant\nvalue = 1\n[scenario]\nhorizon = 0.01\n";

    #[test]
    fn minimal_run_echoes_defaults() {
        let cfg = parse_config_for(MINIMAL, Some(ScenarioKind::Run)).unwrap();
        assert_eq!(cfg.grid, GridConfig { dim: 2, n: 64 });
        assert_eq!(cfg.stepper, StepperConfig::default());
        assert_eq!(cfg.detector, DetectorConfig::default());
        assert_eq!(cfg.flow.kind, FlowChoice::Zero);
        assert_eq!(cfg.params.diag_stride, 10);
        assert_eq!(cfg.resolutions(), vec![64, 128]);
        let text = cfg.to_text();
        assert!(text.contains("cfl = 0.5"));
        assert!(text.contains("neg_cap = 0.001"));
    }

    #[test]
    fn typo_names_key_and_line() {
        let text = format!("{MINIMAL}amplitide = 1, 2\n");
        let err = parse_config_for(&text, Some(ScenarioKind::Run)).unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                line: 8,
                section: "scenario".into(),
                key: "amplitide".into()
            }
        );
        assert!(err.to_string().contains("line 8") && err.to_string().contains("amplitide"));
    }

    #[test]
    fn errors_name_lines() {
        let bad = "[grid]\nn = sixty\n";
        match parse_config_for(bad, Some(ScenarioKind::Run)) {
            Err(ConfigError::TypeMismatch { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let missing = "[grid]\ndim = 2\n[initial]\nkind = constant\nvalue = 1\n";
        match parse_config_for(missing, Some(ScenarioKind::Run)) {
            Err(ConfigError::Missing { key, location, .. }) => {
                assert_eq!(key, "n");
                assert!(location.contains("line 1"));
            }
            other => panic!("{other:?}"),
        }
        let unsorted = "[grid]\nn = 64\n[initial]\nkind = constant\nvalue = 1\n[scenario]\namplitudes = 3, 1\n";
        match parse_config_for(unsorted, Some(ScenarioKind::SuppressionSweep)) {
            Err(ConfigError::Invalid { line: 7, .. }) => {}
            other => panic!("{other:?}"),
        }
        let mismatch = "[scenario]\nkind = relax\n[grid]\nn = 64\n";
        assert!(matches!(
            parse_config_for(mismatch, Some(ScenarioKind::Run)),
            Err(ConfigError::Invalid { line: 2, .. })
        ));
        assert!(matches!(
            parse_config("[grid]\nn = 64\n[initial]\nkind = constant\nvalue = 1\n"),
            Err(ConfigError::Missing { .. })
        ));
        assert!(matches!(
            parse_config("[physics]\n"),
            Err(ConfigError::UnknownSection { line: 1, .. })
        ));
    }

    #[test]
    fn comments_lists_and_booleans() {
        let text = "# header\n[scenario]\nkind = suppress  # sweep\namplitudes = 0, 800,3200\n[grid]\nn = 128\n\
                    [initial]\nkind = gaussian\nmass = 60\nwidth = 0.03\n[stepper]\nchemotaxis = false\n\
                    [flow]\nkind = shear\nt_sw = 2e-4\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.params.amplitudes, vec![0.0, 800.0, 3200.0]);
        assert!(!cfg.stepper.chemotaxis);
        assert_eq!(
            cfg.flow.kind,
            FlowChoice::Shear {
                m: 1,
                t_sw: 2e-4,
                phase_seed: None
            }
        );
        assert!(parse_config(&text.replace("false", "no")).is_err());
    }
}

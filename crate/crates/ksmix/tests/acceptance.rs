//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Runs with `harness = false` so the lines are always visible in `cargo test` output.

use std::f64::consts::PI;
use std::time::Instant;

use ksmix::config::{parse_config, RunConfig};
use ksmix::io;
use ksmix::scenarios::{self, Report};
use ksmix_core::diagnostics::DetectorConfig;
use ksmix_core::flows;
use ksmix_core::solver::{self, KsStepper, SimState, StepperConfig, Termination};
use ksmix_core::spectral::{invert_laplacian, to_physical, to_spectral};
use ksmix_core::{Grid, ScalarField};

fn shipped(name: &str) -> RunConfig {
    let path = format!("{}/configs/{name}.cfg", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    parse_config(&text).unwrap_or_else(|e| panic!("{path}: {e}"))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn failed_verdicts(r: &Report) -> Vec<String> {
    r.verdicts.iter().filter(|v| !v.pass).map(|v| v.to_string()).collect()
}

fn cosine_mode(grid: Grid, k: &[i64], amp: f64, base: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        let phase: f64 = x.iter().zip(k).map(|(a, b)| a * *b as f64).sum();
        base + amp * (2.0 * PI * phase).cos()
    })
}

fn spectral_correctness() -> Outcome {
    let start = Instant::now();
    let mut poisson: f64 = 0.0;
    for (dim, n, k) in [(2, 64, vec![1i64, 0]), (2, 64, vec![3, -5]), (3, 32, vec![1, 2, -1]), (3, 32, vec![0, 0, 4])] {
        let grid = Grid::new(dim, n).unwrap();
        let f = cosine_mode(grid, &k, 1.0, 0.0);
        let k2: f64 = k.iter().map(|c| (c * c) as f64).sum();
        let c = to_physical(&invert_laplacian(&to_spectral(&f))).unwrap();
        let err = c
            .values()
            .iter()
            .zip(f.values())
            .map(|(u, v)| (u - v / (4.0 * PI * PI * k2)).abs())
            .fold(0.0, f64::max);
        poisson = poisson.max(err);
    }

    let grid = Grid::new(2, 128).unwrap();
    let modes: [[i64; 2]; 4] = [[1, 0], [0, 1], [1, 1], [-1, 1]];
    let mut rho0 = ScalarField::constant(grid, 1.0);
    for (i, k) in modes.iter().enumerate() {
        let m = cosine_mode(grid, k, 0.1 / (i + 1) as f64, 0.0);
        rho0 = ScalarField::new(grid, rho0.values().iter().zip(m.values()).map(|(a, b)| a + b).collect()).unwrap();
    }
    let cfg = StepperConfig {
        chemotaxis: false,
        ..StepperConfig::default()
    };
    let t = 0.1;
    let out = solver::run_simulation(rho0.clone(), &flows::make_zero(), t, &cfg, 1000).unwrap();
    let (c0, c1) = (to_spectral(&rho0), to_spectral(out.final_state.rho()));
    let mut heat: f64 = 0.0;
    for k in &modes {
        let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
        let exact = c0.get(k) * (-4.0 * PI * PI * k2 * t).exp();
        heat = heat.max((c1.get(k) - exact).norm() / exact.norm());
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        poisson <= 1e-12 && heat <= 1e-8 && elapsed < 1.0,
        format!(
            "Poisson max error {poisson:.2e} (tol 1e-12); heat-only per-mode relative error {heat:.2e} over t = 0.1 at n = 128 (tol 1e-8); {elapsed:.2}s (limit 1s)"
        ),
    )
}

fn conservation() -> Outcome {
    let start = Instant::now();
    let mut cfg = shipped("run");
    cfg.grid.n = 128;
    let rho0 = scenarios::initial_field(&cfg, 128).unwrap();
    let flow = scenarios::flow_at(&cfg, scenarios::single_amplitude(&cfg)).unwrap();
    let stepper = KsStepper::new(rho0.grid(), &flow, cfg.stepper).unwrap();
    let mut state = SimState::new(rho0.clone());
    let m0 = state.mean();
    let mut drift: f64 = 0.0;
    let steps = 10_000;
    for _ in 0..steps {
        let stage = stepper.stage(&state);
        let dt = stage.admissible_dt.min(cfg.stepper.dt_max);
        state = stepper.finish(&state, stage, dt).unwrap();
        drift = drift.max((state.rho().mean() - m0).abs() / m0);
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        drift <= 1e-10 && rho0.min() >= 0.0 && elapsed < 60.0,
        format!(
            "max relative mass drift {drift:.2e} over {steps} steps to t = {:.3e} (tol 1e-10), nonnegative random data, cellular flow A = {}; {elapsed:.1}s (limit 60s)",
            state.t(),
            scenarios::single_amplitude(&cfg)
        ),
    )
}

fn linearized_rate() -> Outcome {
    let grid = Grid::new(2, 64).unwrap();
    let eps = 1e-6;
    let rho0 = cosine_mode(grid, &[1, 0], eps, 1.0);
    let t = 0.05;
    let out = solver::run_simulation(rho0.clone(), &flows::make_zero(), t, &StepperConfig::default(), 1000).unwrap();
    let (a0, a1) = (to_spectral(&rho0).get(&[1, 0]).re, to_spectral(out.final_state.rho()).get(&[1, 0]).re);
    let rate = (a0 / a1).ln() / t;
    let exact = 4.0 * PI * PI - 1.0;
    let rel = (rate - exact).abs() / exact;
    outcome(
        rel <= 0.01,
        format!("mode-1 decay rate {rate:.6} vs 4 pi^2 - 1 = {exact:.6}: relative error {rel:.2e} (tol 1%)"),
    )
}

fn blowup() -> Outcome {
    let start = Instant::now();
    let (sup, rs) = scenarios::scenario_blowup_baseline(&shipped("blowup")).unwrap();
    let (sub, rb) = scenarios::scenario_blowup_baseline(&shipped("blowup_subcritical")).unwrap();
    let mut fails = failed_verdicts(&rs);
    fails.extend(failed_verdicts(&rb));
    let times: Vec<String> = sup
        .runs
        .iter()
        .map(|r| format!("n={}: {:.4e}", r.n, r.blowup_time.unwrap_or(f64::NAN)))
        .collect();
    let rate0 = sup.moments.first().map_or(f64::NAN, |m| m.rate);

    // Information only: the same runs with the default negativity cap.
    let mut strict = shipped("blowup");
    strict.detector = DetectorConfig::default();
    let (strict_res, _) = scenarios::scenario_blowup_baseline(&strict).unwrap();
    let strict_times: Vec<String> = strict_res
        .runs
        .iter()
        .map(|r| format!("n={}: {:.4e} ({})", r.n, r.t_end, r.clause.map_or("none", |c| c.name())))
        .collect();
    println!("info criterion 4: default neg_cap = 1e-3 stops at {}", strict_times.join(", "));

    let pass = fails.is_empty() && sup.supercritical && !sub.supercritical;
    outcome(
        pass,
        format!(
            "M=60 blow-up times {} spread {:.2}% (tol 10%); second-moment rate at t=0 {rate0:.3e} < 0; M=5 {} with monotone L2 decay: {}; {:.0}s{}",
            times.join(", "),
            100.0 * sup.spread.unwrap_or(f64::NAN),
            sub.runs.iter().map(|r| scenarios::termination_name(r.termination)).collect::<Vec<_>>().join("/"),
            sub.runs.iter().all(|r| r.l2_monotone),
            start.elapsed().as_secs_f64(),
            if fails.is_empty() { String::new() } else { format!("; failed: {}", fails.join(" | ")) }
        ),
    )
}

fn suppression() -> Outcome {
    let start = Instant::now();
    let (sweep, report) = scenarios::scenario_suppression_sweep(&shipped("suppress")).unwrap();
    let base = sweep.baseline_time.unwrap_or(f64::NAN);
    let survivor = sweep.rows.iter().find(|r| {
        r.termination == Termination::Completed && r.t_end >= 5.0 * base * (1.0 - 1e-12) && r.sup_l2 <= 2.0 * sweep.b
    });
    let monotone = report.verdicts.iter().all(|v| v.pass);
    let sups: Vec<String> = sweep.rows.iter().map(|r| format!("A={}: {:.3}", r.amplitude, r.sup_l2 / sweep.b)).collect();
    outcome(
        survivor.is_some() && monotone,
        format!(
            "baseline blow-up {base:.4e}, horizon {:.4e}; sup/B {}; surviving amplitude {:?} (needs sup <= 2B); non-increasing with at most one 5% inversion: {monotone}; {:.0}s",
            sweep.horizon,
            sups.join(", "),
            survivor.map(|r| r.amplitude),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn relaxation() -> Outcome {
    let start = Instant::now();
    let (sweep, _) = scenarios::scenario_relaxation_rate(&shipped("relax")).unwrap();
    let kappas: Vec<Option<f64>> = sweep.rows.iter().map(|r| r.kappa).collect();
    let all: Option<Vec<f64>> = kappas.iter().copied().collect();
    let pass = sweep.rows.len() == 4 && all.as_ref().is_some_and(|k| k.windows(2).all(|w| w[1] >= w[0]));
    let text: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| format!("A={}: {}", r.amplitude, r.kappa.map_or("n/a".into(), |k| format!("{k:.1}"))))
        .collect();
    outcome(
        pass,
        format!("fitted kappa {} (nondecreasing, 4 points); {:.0}s", text.join(", "), start.elapsed().as_secs_f64()),
    )
}

fn approximation() -> Outcome {
    let cfg = shipped("approx");
    let (rows, report) = scenarios::scenario_approximation_check(&cfg).unwrap();
    let amps: Vec<f64> = rows.iter().map(|r| r.amplitude).collect();
    let d: Vec<String> = rows.iter().map(|r| format!("A={}: {:.4}", r.amplitude, r.sup_distance)).collect();
    outcome(
        amps == [100.0, 200.0, 400.0, 800.0] && report.passed(),
        format!(
            "sup_t |rho - eta|_L2 over flow-time window {}: {}; {}",
            cfg.params.window,
            d.join(", "),
            report.verdicts[0].detail
        ),
    )
}

fn mixing() -> Outcome {
    let (res, report) = scenarios::scenario_mixing_bench(&shipped("mixbench")).unwrap();
    let ratio = res.reduction();
    let duality = res.duality.clone();
    let table = report.artifact("scaling.csv").map(|a| String::from_utf8_lossy(&a.bytes).lines().count());
    let emitted = table == Some(res.targets.len() + 1);
    let stages = report.verdicts.iter().find(|v| v.name == "hm1_decreasing_across_stages").is_some_and(|v| v.pass);
    let pass = ratio <= 0.25 && duality.as_ref().is_some_and(|d| d.ratio <= 1.0) && emitted && stages;
    let times: Vec<String> = res
        .targets
        .iter()
        .map(|t| format!("{}: {}", t.epsilon, t.time.map_or("-".into(), |x| format!("{x}"))))
        .collect();
    outcome(
        pass,
        format!(
            "H^-1 final/initial {ratio:.4} (needs <= 0.25); stage boundaries monotone: {stages}; {}; scaling table [{}] emitted: {emitted}",
            duality.map_or("no duality check".into(), |d| format!(
                "mixedness {:.4} at level {} gives eps_eff {:.4}, H^-1/(eps_eff |f|_inf) = {:.4} (needs <= 1)",
                d.mixedness, d.level, d.eps_eff, d.ratio
            )),
            times.join(", ")
        ),
    )
}

fn inequalities() -> Outcome {
    let start = Instant::now();
    let cfg = shipped("ineq");
    let (res, report) = scenarios::scenario_ineq_suite(&cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let stab: Vec<String> = res.stability.iter().map(|(n, f)| format!("{n} {f:.3}")).collect();
    let fails = failed_verdicts(&report);
    outcome(
        fails.is_empty() && cfg.params.ensemble == 1000 && cfg.resolutions() == [128, 256] && elapsed < 300.0,
        format!(
            "1000 fields at n = 128, 256: all ratios finite: {}; stability factors {} (tol 2x); homogeneity {:.2e} (tol 1e-10); {elapsed:.0}s (limit 300s){}",
            res.rows.iter().all(|r| r.finite == r.count),
            stab.join(", "),
            res.homogeneity,
            if fails.is_empty() { String::new() } else { format!("; failed: {}", fails.join(" | ")) }
        ),
    )
}

fn determinism() -> Outcome {
    let mut mismatched = Vec::new();
    let mut files = 0;
    for name in ["run", "blowup", "suppress", "approx", "mixbench"] {
        let cfg = shipped(name);
        let a = scenarios::run_scenario(&cfg).unwrap();
        let b = scenarios::run_scenario(&cfg).unwrap();
        files += a.artifacts.len();
        if a.artifacts != b.artifacts || io::manifest(&a.artifacts) != io::manifest(&b.artifacts) {
            mismatched.push(name);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("{files} CSV/snapshot/text files compared byte-for-byte across reruns of run, blowup, suppress, approx, mixbench; mismatches: {mismatched:?}"),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` and friends: nothing to enumerate beyond this single suite.
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("spectral correctness", spectral_correctness),
        ("conservation", conservation),
        ("linearized rate", linearized_rate),
        ("blow-up reproduction", blowup),
        ("suppression", suppression),
        ("relaxation enhancement", relaxation),
        ("approximation", approximation),
        ("mixing benchmark", mixing),
        ("inequality suite", inequalities),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failures += 1;
        }
        println!("{} criterion {} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ksmix::config::{parse_config_for, ScenarioKind, CONFIG_REFERENCE};
use ksmix::io::write_outputs;
use ksmix::scenarios::{run_scenario, ScenarioError};

#[derive(Parser)]
#[command(name = "ksmix", version, about = "Keller-Segel with advection on the torus: suppression-by-mixing experiments")]
#[command(after_help = CONFIG_REFERENCE)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single run of the full equation
    Run(Common),
    /// Zero- or fixed-flow blow-up baseline with a refinement study
    Blowup(Common),
    /// Amplitude sweep for blow-up suppression
    Suppress(Common),
    /// Fitted L2 decay rate versus amplitude
    Relax(Common),
    /// Distance between the full equation and pure transport versus amplitude
    Approx(Common),
    /// H^-1 mixing benchmark of the multi-scale mixer
    Mixbench(Common),
    /// Empirical constants of the interpolation inequalities
    Ineq(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `[scenario] output`, else `out/<subcommand>`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the grid resolution n
    #[arg(long)]
    resolution: Option<usize>,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Run(a) => (ScenarioKind::Run, a),
        Command::Blowup(a) => (ScenarioKind::BlowupBaseline, a),
        Command::Suppress(a) => (ScenarioKind::SuppressionSweep, a),
        Command::Relax(a) => (ScenarioKind::RelaxationRate, a),
        Command::Approx(a) => (ScenarioKind::ApproximationCheck, a),
        Command::Mixbench(a) => (ScenarioKind::MixingBench, a),
        Command::Ineq(a) => (ScenarioKind::IneqSuite, a),
    };

    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match parse_config_for(&text, Some(kind)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(n) = args.resolution {
        if !n.is_power_of_two() || !(16..=2048).contains(&n) {
            eprintln!("error: --resolution must be a power of two in 16..=2048 (got {n})");
            return ExitCode::from(2);
        }
    }
    cfg.apply_overrides(args.resolution, args.seed);

    let report = match run_scenario(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(match e {
                ScenarioError::Setup(_) => 2,
                ScenarioError::Numerical(_) => 3,
            });
        }
    };
    let dir = args
        .out
        .or_else(|| cfg.params.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
    if let Err(e) = write_outputs(&dir, &report.artifacts) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    print!("{}", report.verdict_text());
    println!("# outputs in {}", dir.display());
    ExitCode::from(report.exit_code() as u8)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sonic_patch::config::SolverConfig;
use sonic_patch::pipeline::{exit_code_for, run, Stage};

/// Characteristic-mesh solver and sonic-curve regularity diagnostics for the
/// self-similar nonlinear wave system with a Chaplygin gas.
#[derive(Parser)]
#[command(name = "sonic-patch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the key = value run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Global mesh-refinement multiplier for convergence studies.
    #[arg(long, global = true, default_value_t = 1)]
    refine: u32,

    /// Exit with status 4 when a diagnose threshold is violated.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Trace the planar-wave characteristics and export them as CSV.
    Trace,
    /// Solve the Goursat problem on the characteristic mesh.
    Solve,
    /// Continue the solution through the near-sonic layer.
    March,
    /// Emit the regularity diagnostics report.
    Diagnose,
    /// Run the identity-verification suite.
    Verify,
    /// Run every stage and emit all artifacts.
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = match cli.command {
        Command::Trace => Stage::Trace,
        Command::Solve => Stage::Solve,
        Command::March => Stage::March,
        Command::Diagnose => Stage::Diagnose,
        Command::Verify => Stage::Verify,
        Command::All => Stage::All,
    };

    let Some(config_path) = cli.config else {
        eprintln!("config error: --config <path> is required");
        return ExitCode::from(2);
    };
    let cfg = match SolverConfig::load(&config_path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let cfg = if cli.refine > 1 {
        cfg.with_refine(cli.refine)
    } else {
        cfg
    };

    let result = run(&cfg, stage, &cli.out, cli.strict);
    match &result {
        Ok(outcome) => {
            for a in &outcome.artifacts {
                println!("wrote {}", cli.out.join(a).display());
            }
            for v in &outcome.violations {
                eprintln!("strict violation: {v}");
            }
        }
        Err(e) => eprintln!("{e}"),
    }
    ExitCode::from(exit_code_for(&result, cli.strict) as u8)
}

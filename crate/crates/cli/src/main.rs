use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tvfluid_cli::{
    run_check_invariants, run_compare, run_equivalence, run_simulate, run_solve, CliError,
    RunReport, Scenario,
};

#[derive(Parser)]
#[command(name = "tvfluid", version, about = "Time-varying many-server fluid model with abandonment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the grid step h.
    #[arg(long, global = true)]
    grid_h: Option<f64>,
    /// Override the simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exit with code 4 when any invariant check fails.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the key equation; writes trajectories.csv and diagnostics.json.
    Solve,
    /// Run the stochastic simulation for every n in the sim block.
    Simulate,
    /// Solve and simulate, then compare scaled means with the fluid path.
    Compare,
    /// Compare elapsed- and residual-time formulations.
    Equivalence,
    /// Solve and write every invariant check to invariants.json.
    CheckInvariants,
}

fn configure_threads() {
    if let Some(n) = std::env::var("TVFLUID_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn run(cli: &Cli) -> Result<RunReport, CliError> {
    let path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Schema("--scenario is required".into()))?;
    let mut sc = Scenario::load(path)?;
    if let Some(h) = cli.grid_h {
        sc = sc.with_step(h)?;
    }
    if let Some(seed) = cli.seed {
        sc = sc.with_seed(seed);
    }
    match cli.command {
        Command::Solve => run_solve(&sc, &cli.out),
        Command::Simulate => run_simulate(&sc, &cli.out),
        Command::Compare => run_compare(&sc, &cli.out),
        Command::Equivalence => run_equivalence(&sc, &cli.out),
        Command::CheckInvariants => run_check_invariants(&sc, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(&cli) {
        Ok(report) => {
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            if report.failed_checks > 0 {
                eprintln!("{} check(s) failed", report.failed_checks);
                if cli.strict {
                    return ExitCode::from(CliError::Invariants(report.failed_checks).exit_code() as u8);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

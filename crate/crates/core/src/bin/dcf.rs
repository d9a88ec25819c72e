//! Command-line interface over the analytical model, tuner, and simulator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dcf_core::cli::{self, CmdResult};
use dcf_core::config;

#[derive(Parser)]
#[command(
    name = "dcf",
    version,
    about = "Finite-load DCF equilibrium model, capacity analysis, cross-layer tuning, \
             and slot-level simulation",
    long_about = None
)]
struct Args {
    /// JSON configuration file; omitted means all defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads for sweeps and batch runs (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Master seed override for every random draw.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,

    /// Output directory override (default: `outputs.dir` or `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured scenario's equilibrium and capacity landmarks.
    Solve,
    /// Solve over a grid of values along one scenario axis.
    Sweep {
        /// Axis to vary: lambda, w0, payload, or n.
        #[arg(long)]
        axis: String,
        /// Explicit comma-separated grid values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        /// Grid start (with --to and --points).
        #[arg(long)]
        from: Option<f64>,
        /// Grid end (with --from and --points).
        #[arg(long)]
        to: Option<f64>,
        /// Number of grid points (with --from and --to).
        #[arg(long)]
        points: Option<usize>,
        /// Space the grid logarithmically.
        #[arg(long)]
        log: bool,
    },
    /// Pick the contention window or payload size for the scenario.
    Optimize,
    /// Run the slot-level simulator on the configured scenario.
    Simulate,
    /// Run the on/off station timeline twice: fixed parameters, then tuned.
    Fig7,
}

fn run(args: &Args) -> dcf_core::Result<CmdResult> {
    if let Some(jobs) = args.jobs {
        // Ignore the error if a global pool already exists (e.g. repeated
        // invocation inside one process while testing).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let raw = config::load_raw(args.config.as_deref())?;
    let out = args.out.as_deref();
    match &args.command {
        Command::Solve => cli::cmd_solve(&raw, args.seed, out),
        Command::Sweep { axis, values, from, to, points, log } => {
            let grid = cli::sweep_values(values, *from, *to, *points, *log)?;
            cli::cmd_sweep(&raw, axis, &grid, args.seed, out)
        }
        Command::Optimize => cli::cmd_optimize(&raw, args.seed, out),
        Command::Simulate => cli::cmd_simulate(&raw, args.seed, out),
        Command::Fig7 => cli::cmd_fig7(&raw, args.seed, out),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(result) => {
            println!("{}", result.summary);
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

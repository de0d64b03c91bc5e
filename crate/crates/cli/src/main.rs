//! `amps`: DC contingency solves, sweeps and self-tests from the command line.

mod commands;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::input::InputArgs;

#[derive(Debug, Parser)]
#[command(name = "amps", version, about = "Sparse solution updates for N-k DC contingency analysis")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Factor the base case and solve for the bus angles.
    Solve(SolveArgs),
    /// Solve a single contingency and print its result as JSON.
    Contingency(ContingencyArgs),
    /// Run an N-k sweep and write per-contingency CSV rows.
    Sweep(SweepArgs),
    /// Run the seeded property suites.
    Selftest(SelftestArgs),
    /// Emit a synthetic grid as a MATPOWER case file.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Write `bus_id,angle_rad` rows here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolverFlags {
    /// GMRES relative residual tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// GMRES iteration cap (default 4m).
    #[arg(long = "max-it")]
    max_it: Option<usize>,
    /// Timing repetitions per method; the median is reported.
    #[arg(long, default_value_t = 20)]
    reps: usize,
}

#[derive(Debug, Args)]
struct ContingencyArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated 1-based branch numbers.
    #[arg(long, value_delimiter = ',')]
    branches: Vec<usize>,
    /// Comma-separated 1-based generator numbers.
    #[arg(long, value_delimiter = ',')]
    generators: Vec<usize>,
    /// direct, gmres or refactor.
    #[arg(long, default_value = "direct")]
    method: String,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Branches removed per contingency.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// exhaustive, random or list:PATH.
    #[arg(long, default_value = "random")]
    selector: String,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated subset of direct,gmres,refactor.
    #[arg(long, default_value = "direct,gmres,refactor")]
    methods: String,
    #[command(flatten)]
    solver: SolverFlags,
    /// Worker threads; timings are cleanest with 1.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Largest C(N, k) the exhaustive selector accepts.
    #[arg(long, default_value_t = 1_000_000)]
    cap: u64,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary output path.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Largest system size drawn by the suites.
    #[arg(long = "n-max", default_value_t = 200)]
    n_max: usize,
    /// Instances per suite.
    #[arg(long, default_value_t = 50)]
    cases: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Negate the recovery correction to check that the suites notice.
    #[arg(long = "inject-fault", hide = true)]
    inject_fault: bool,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// n=<N>,deg=<D>,seed=<S>[,x=<lo>:<hi>]
    #[arg(long = "gen")]
    spec: String,
    /// Case name written into the file header.
    #[arg(long, default_value = "synthetic")]
    name: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Contingency(a) => commands::contingency(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Selftest(a) => commands::selftest(a),
        Command::Gen(a) => commands::gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}

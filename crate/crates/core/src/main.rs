//! Command-line driver. Exit codes: 0 success, 2 infeasible current,
//! 3 solver failure, 4 configuration or input error.

use clap::{Args, Parser, Subcommand};
use glsc::run::{pipeline, run_stages, run_sweep, RunConfig, Stage};
use glsc::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "glsc", version, about = "Strong-current Ginzburg-Landau solver pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory for artifacts and the manifest.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Proceed past a negative feasibility check.
    #[arg(long)]
    override_feasibility: bool,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Pointwise and flux-ratio admissibility of the boundary current.
    Feasibility(Common),
    /// Outer potential, its correction and amplitude fields.
    Outer(Common),
    /// Boundary-layer profiles at every boundary station.
    Inner(Common),
    /// Composite approximation and residual report.
    Composite(Common),
    /// Mode table and verdict for the one-dimensional normal-current state.
    Stability(Common),
    /// Time-dependent one-dimensional run and fitted growth rate.
    Evolve1d(Common),
    /// Full pipeline once per value of the configured sweep axis.
    Sweep(Common),
    /// Every stage the config provides for.
    All(Common),
}

fn execute(cmd: Command) -> Result<(), Error> {
    let (common, stages) = match cmd {
        Command::Feasibility(c) => (c, Some(vec![Stage::Feasibility])),
        Command::Outer(c) => (c, Some(vec![Stage::Outer])),
        Command::Inner(c) => (c, Some(vec![Stage::Inner])),
        Command::Composite(c) => (c, Some(vec![Stage::Composite])),
        Command::Stability(c) => (c, Some(vec![Stage::Stability])),
        Command::Evolve1d(c) => (c, Some(vec![Stage::Evolve1d])),
        Command::Sweep(c) => (c, None),
        Command::All(c) => (c, Some(Vec::new())),
    };
    if let Some(n) = common.jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let cfg = RunConfig::load(&common.config)?;
    let (manifest, result) = match stages {
        None => run_sweep(&cfg, &common.out, common.override_feasibility),
        Some(s) if s.is_empty() => run_stages(&cfg, &common.out, &pipeline(&cfg)?, common.override_feasibility, true),
        Some(s) => run_stages(&cfg, &common.out, &s, common.override_feasibility, false),
    };
    for (name, rec) in &manifest.stages {
        match &rec.error {
            Some(e) => eprintln!("{name}: {} ({e})", rec.status),
            None => eprintln!("{name}: {}", rec.status),
        }
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

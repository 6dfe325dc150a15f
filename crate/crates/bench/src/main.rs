use std::path::PathBuf;

use clap::{Parser, Subcommand};

use hiermap_bench::checks::Suite;
use hiermap_bench::commands::{cmd_check, cmd_rates, cmd_solve, cmd_sweep, Options};

/// MAP estimation for hierarchical sparsity models: solves, property
/// checks, rate sweeps and certified-bound runs.
#[derive(Debug, Parser)]
#[command(name = "hiermap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (sections of `key = value`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the one in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for sweeps; falls back to HIERMAP_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one problem and write the solution, theta, trace and report.
    Solve,
    /// Run a property-check suite.
    Check {
        #[arg(long, value_parser = parse_suite)]
        suite: Suite,
    },
    /// Run a rate-scaling sweep and fit the log-log slope.
    Sweep,
    /// Check the certified error radius on hypothesis-satisfying trials.
    Rates,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { hiermap_bench::exit::CONFIG } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let opts = Options {
        config: cli.config,
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out,
    };
    let code = match cli.command {
        Command::Solve => cmd_solve(&opts),
        Command::Check { suite } => cmd_check(&opts, suite),
        Command::Sweep => cmd_sweep(&opts),
        Command::Rates => cmd_rates(&opts),
    };
    std::process::exit(code);
}

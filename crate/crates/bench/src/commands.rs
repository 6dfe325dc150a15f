//! Subcommand bodies. Each returns a process exit code from [`crate::exit`]
//! and prints a one-line summary; artifacts go to the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use hiermap::io::{save_problem, vector_to_csv};
use hiermap::solver::{annotate_trace, linear_rate_estimate, solve, NormalSystem};
use hiermap::Variant;

use crate::checks::{run_suite, Suite, SuiteResult};
use crate::config::{Config, ConfigError};
use crate::exit;
use crate::rates::{run_rates, RatesSpec};
use crate::report::{trials_to_csv, write_experiment};
use crate::spec::{solver_from_config, ModelSpec, ProblemSource, MODEL_KEYS, PROBLEM_KEYS, SOLVER_KEYS, TRUTH_KEYS};
use crate::sweep::{run_sweep, SweepSpec};

pub const DEFAULT_OUT: &str = "hiermap-out";

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Options {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    fn load_config(&self, required: bool) -> Result<Config, ConfigError> {
        match &self.config {
            Some(p) => Config::load(p),
            None if required => Err(ConfigError::new("<file>", "this command needs --config <path>")),
            None => Ok(Config::default()),
        }
    }
}

fn config_failure(e: &ConfigError) -> i32 {
    eprintln!("error: {e}");
    exit::CONFIG
}

fn io_failure(what: &str, e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {what}: {e}");
    exit::CONFIG
}

/// Summary written to `report.json` by `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub variant: Variant,
    pub n: usize,
    pub d: usize,
    pub eta: f64,
    pub lambda: f64,
    pub seed: Option<u64>,
    pub iters: usize,
    pub converged: bool,
    pub objective_f: f64,
    pub grad_inf_norm: f64,
    pub error_sq: Option<f64>,
    pub rho_hat: Option<f64>,
    pub tail_spread: Option<f64>,
    pub wall_time_ms: f64,
}

impl SolveReport {
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_ms: 0.0,
            ..self.clone()
        }
    }
}

/// One solve; writes `solution.csv`, `theta.csv`, `trace.csv`,
/// `report.json` and, for generated problems, the problem itself under
/// `problem/`.
pub fn cmd_solve(opts: &Options) -> i32 {
    let cfg = match opts.load_config(true) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    let parsed = (|| {
        cfg.check_known(&[PROBLEM_KEYS, TRUTH_KEYS, MODEL_KEYS, SOLVER_KEYS].concat())?;
        Ok::<_, ConfigError>((
            ProblemSource::from_config(&cfg, opts.seed)?,
            ModelSpec::from_config(&cfg)?,
            solver_from_config(&cfg)?,
        ))
    })();
    let (source, model, solver_cfg) = match parsed {
        Ok(x) => x,
        Err(e) => return config_failure(&e),
    };
    let (p, hm) = match source.instantiate(&model) {
        Ok(x) => x,
        Err(e) => return io_failure("cannot set up the problem", e),
    };
    let start = Instant::now();
    let mut state = match solve(&p, &hm, &solver_cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: solve failed: {e}");
            return exit::NON_CONVERGENCE;
        }
    };
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let rate = solver_cfg
        .record_iterates
        .then(|| linear_rate_estimate(&state.trace, &hm).ok())
        .flatten();
    if let Some(r) = &rate {
        annotate_trace(&mut state.trace, r);
    }
    let grad = NormalSystem::new(&p).gradient_f(&state.u, &hm).map(|g| g.amax());
    let objective = hiermap::model::objective_f(&state.u, &p, &hm);
    let (grad_inf_norm, objective_f) = match (grad, objective) {
        (Ok(g), Ok(f)) => (g, f),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: cannot evaluate the solution: {e}");
            return exit::NON_CONVERGENCE;
        }
    };
    let report = SolveReport {
        variant: hm.variant(),
        n: p.n(),
        d: p.d(),
        eta: hm.eta(),
        lambda: hm.lambda(),
        seed: source.seed(),
        iters: state.iter,
        converged: state.converged,
        objective_f,
        grad_inf_norm,
        error_sq: p.u_star().map(|u| (&state.u - u).norm_squared()),
        rho_hat: rate.as_ref().and_then(|r| r.rho_hat),
        tail_spread: rate.as_ref().and_then(|r| r.tail_spread()),
        wall_time_ms,
    };
    let out = opts.out_dir();
    let written = (|| -> std::io::Result<()> {
        std::fs::create_dir_all(&out)?;
        std::fs::write(out.join("solution.csv"), vector_to_csv(&state.u))?;
        std::fs::write(out.join("theta.csv"), vector_to_csv(state.theta.as_vector()))?;
        std::fs::write(out.join("trace.csv"), state.trace.to_csv())?;
        std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        if let ProblemSource::Generated(spec) = &source {
            save_problem(&out.join("problem"), &p, Some(spec.seed), serde_json::to_value(spec)?)
                .map_err(std::io::Error::other)?;
        }
        Ok(())
    })();
    if let Err(e) = written {
        return io_failure(&format!("cannot write to {}", out.display()), e);
    }
    println!(
        "solve: {} after {} iterations, grad_inf_norm = {:e}, F = {:.12e}",
        if state.converged { "converged" } else { "stopped at max_iters" },
        state.iter,
        grad_inf_norm,
        objective_f
    );
    if state.converged {
        exit::SUCCESS
    } else {
        exit::NON_CONVERGENCE
    }
}

pub const CHECK_KEYS: &[&str] = &["check.cases", "check.seed"];

/// Run one suite; prints pass/fail counts and, on failure, the first
/// reproducer.
pub fn cmd_check(opts: &Options, suite: Suite) -> i32 {
    let cfg = match opts.load_config(false).and_then(|c| c.check_known(CHECK_KEYS).map(|_| c)) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    let params = (|| Ok::<_, ConfigError>((cfg.get_usize("check.cases")?, cfg.get_u64("check.seed")?)))();
    let (cases, seed) = match params {
        Ok((c, s)) => (c.unwrap_or(suite.default_cases()), opts.seed.or(s).unwrap_or(0)),
        Err(e) => return config_failure(&e),
    };
    if cases == 0 {
        return config_failure(&ConfigError::new("check.cases", "must be at least 1"));
    }
    let result = run_suite(suite, cases, seed);
    print_suite(&result);
    if let Some(out) = &opts.out {
        let written = std::fs::create_dir_all(out).and_then(|_| {
            std::fs::write(
                out.join(format!("check_{}.json", suite.name())),
                serde_json::to_string_pretty(&result)?,
            )
        });
        if let Err(e) = written {
            return io_failure(&format!("cannot write to {}", out.display()), e);
        }
    }
    if result.ok() {
        exit::SUCCESS
    } else {
        exit::VIOLATION
    }
}

pub fn print_suite(r: &SuiteResult) {
    println!("suite {}: {} passed, {} failed", r.suite, r.passed, r.failed);
    if let Some(repro) = &r.reproducer {
        println!("  reproducer: {repro}");
    }
}

/// Threads from the flag, else `HIERMAP_THREADS`, else the runtime default.
pub fn resolve_threads(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var("HIERMAP_THREADS").ok().and_then(|v| v.trim().parse().ok()))
}

pub fn cmd_sweep(opts: &Options) -> i32 {
    let spec = match opts.load_config(true).and_then(|c| SweepSpec::from_config(&c, opts.seed)) {
        Ok(s) => s,
        Err(e) => return config_failure(&e),
    };
    let report = match run_sweep(&spec, resolve_threads(opts.threads)) {
        Ok(r) => r,
        Err(e) => return io_failure("cannot run the sweep", e),
    };
    let out = opts.out_dir();
    if let Err(e) = write_experiment(&out, &report) {
        return io_failure(&format!("cannot write to {}", out.display()), e);
    }
    for c in &report.cells {
        println!(
            "cell n={} eta={:e}: median error_sq = {}, {}/{} trials{}",
            c.n,
            c.eta,
            c.median_error_sq.map_or("n/a".to_string(), |m| format!("{m:.4e}")),
            c.trials.len(),
            spec.trials,
            if c.completed { "" } else { " (incomplete)" }
        );
        for f in &c.failures {
            println!("  failure: {f}");
        }
    }
    match &report.fits {
        Some(f) => println!("slope {:.4} (95% CI [{:.4}, {:.4}]) over {} points", f.slope, f.ci_low, f.ci_high, f.points),
        None => println!("slope: not fitted (needs at least 4 grid points)"),
    }
    if report.all_completed() {
        exit::SUCCESS
    } else {
        exit::NON_CONVERGENCE
    }
}

pub fn cmd_rates(opts: &Options) -> i32 {
    let spec = match opts.load_config(true).and_then(|c| RatesSpec::from_config(&c, opts.seed)) {
        Ok(s) => s,
        Err(e) => return config_failure(&e),
    };
    let report = match run_rates(&spec) {
        Ok(r) => r,
        Err(e) => return io_failure("cannot run the certified-bound trials", e),
    };
    let out = opts.out_dir();
    let written = (|| -> std::io::Result<()> {
        std::fs::create_dir_all(&out)?;
        std::fs::write(out.join("rates.json"), serde_json::to_string_pretty(&report)?)?;
        let csv = trials_to_csv(report.trials.iter().map(|t| &t.record)).map_err(std::io::Error::other)?;
        std::fs::write(out.join("trials.csv"), csv)
    })();
    if let Err(e) = written {
        return io_failure(&format!("cannot write to {}", out.display()), e);
    }
    println!(
        "rates: {}/{} trials satisfy the hypotheses ({:.0}%), {} violations",
        report.certified(),
        report.trials.len(),
        100.0 * report.hypotheses_fraction,
        report.violations.len()
    );
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    if !report.violations.is_empty() {
        for s in &report.violations {
            println!("  violation: seed {s}");
        }
        exit::VIOLATION
    } else if !report.all_converged() {
        exit::NON_CONVERGENCE
    } else {
        exit::SUCCESS
    }
}

/// Read a report written by [`cmd_solve`].
pub fn read_solve_report(dir: &Path) -> std::io::Result<SolveReport> {
    let text = std::fs::read_to_string(dir.join("report.json"))?;
    Ok(serde_json::from_str(&text)?)
}

//! Rate-scaling sweeps over a grid of sample sizes and `eta` values.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hiermap::rng::derive_seed;
use hiermap::solver::{linear_rate_estimate, solve, SolverConfig};
use hiermap::synth::{generate_problem, ProblemSpec, SigmaSpec, TruthKind};
use hiermap::theory::{corollary_rate, RateClass};
use hiermap::{Hypermodel, Structure};

use crate::certify::{certify, CertifySpec};
use crate::config::{Config, ConfigError, ConfigResult};
use crate::report::{fit_cells, CellReport, ExperimentReport, TrialRecord};
use crate::spec::{
    check_eta, positive_usize, sigma_from_config, solver_from_config, truth_from_config, LambdaSpec, ModelSpec,
    StructureSpec, MODEL_KEYS, SOLVER_KEYS, TRUTH_KEYS,
};

pub const SWEEP_KEYS: &[&str] = &[
    "sweep.n",
    "sweep.d",
    "sweep.eta",
    "sweep.trials",
    "sweep.seed",
    "sweep.tau_sq_factor",
    "sweep.rsc_samples",
    "problem.sigma",
    "problem.rho",
    "problem.normalize",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub structure: StructureSpec,
    pub lambda: LambdaSpec,
    pub n_grid: Vec<usize>,
    pub d: usize,
    pub etas: Vec<f64>,
    pub sigma: SigmaSpec,
    pub truth: TruthKind,
    pub normalize: bool,
    pub trials: usize,
    pub master_seed: u64,
    pub solver: SolverConfig,
    pub certify: CertifySpec,
}

impl SweepSpec {
    pub fn from_config(cfg: &Config, seed_override: Option<u64>) -> ConfigResult<Self> {
        let allowed: Vec<&str> = [SWEEP_KEYS, MODEL_KEYS, TRUTH_KEYS, SOLVER_KEYS].concat();
        cfg.check_known(&allowed)?;
        if cfg.get_f64("model.eta")?.is_some() {
            return Err(ConfigError::new("model.eta", "sweeps take their eta grid from sweep.eta"));
        }
        let etas = cfg.get_f64_list("sweep.eta")?.ok_or_else(|| ConfigError::new("sweep.eta", "required key is missing"))?;
        if etas.is_empty() {
            return Err(ConfigError::new("sweep.eta", "grid must not be empty"));
        }
        for &eta in &etas {
            check_eta("sweep.eta", eta)?;
        }
        let model = ModelSpec::with_eta(cfg, etas[0], "sweep.eta")?;
        let n_grid = cfg.get_usize_list("sweep.n")?.ok_or_else(|| ConfigError::new("sweep.n", "required key is missing"))?;
        if n_grid.is_empty() {
            return Err(ConfigError::new("sweep.n", "grid must not be empty"));
        }
        if n_grid.contains(&0) {
            return Err(ConfigError::new("sweep.n", "sample sizes must be at least 1"));
        }
        let trials = cfg.get_usize("sweep.trials")?.unwrap_or(20);
        if trials == 0 {
            return Err(ConfigError::new("sweep.trials", "must be at least 1"));
        }
        let mut certify = CertifySpec::default();
        if let Some(f) = cfg.get_f64("sweep.tau_sq_factor")? {
            if !(f >= 0.0) {
                return Err(ConfigError::new("sweep.tau_sq_factor", format!("must be nonnegative, got {f}")));
            }
            certify.tau_sq_factor = f;
        }
        if let Some(s) = cfg.get_usize("sweep.rsc_samples")? {
            if s == 0 {
                return Err(ConfigError::new("sweep.rsc_samples", "must be at least 1"));
            }
            certify.rsc_samples = s;
        }
        let spec = Self {
            structure: model.structure,
            lambda: model.lambda,
            n_grid,
            d: positive_usize(cfg, "sweep.d")?,
            etas,
            sigma: sigma_from_config(cfg)?,
            truth: truth_from_config(cfg)?,
            normalize: cfg.get_bool("problem.normalize")?.unwrap_or(true),
            trials,
            master_seed: seed_override.or(cfg.get_u64("sweep.seed")?).unwrap_or(0),
            solver: solver_from_config(cfg)?,
            certify,
        };
        spec.structure
            .build(spec.d)
            .map_err(|e| ConfigError::new("sweep.d", format!("cannot build the structure: {e}")))?;
        Ok(spec)
    }

    /// Seed of trial `t` in the cell `(n, etas[eta_index])`. Independent of
    /// the other grid entries, so extending a grid keeps existing cells.
    pub fn trial_seed(&self, n: usize, eta_index: usize, t: usize) -> u64 {
        derive_seed(self.master_seed, &[n as u64, eta_index as u64, t as u64])
    }

    fn rate_class(&self) -> RateClass {
        match self.truth {
            TruthKind::HardSparse { s, .. } | TruthKind::GroupSparse { s, .. } | TruthKind::FrameCompressible { s, .. } => {
                RateClass::Hard { s }
            }
            TruthKind::LqBall { q, r_q, .. } | TruthKind::GroupLq { q, r_q, .. } => RateClass::Lq { q, r_q },
        }
    }

    fn sparsity_columns(&self) -> (f64, f64) {
        match self.rate_class() {
            RateClass::Hard { s } => (s as f64, 0.0),
            RateClass::Lq { q, r_q } => (r_q, q),
        }
    }
}

/// Solve and certify one trial.
pub fn run_trial(spec: &SweepSpec, structure: &Structure, n: usize, eta: f64, seed: u64) -> hiermap::Result<(TrialRecord, bool)> {
    let lambda = spec.lambda.resolve(structure, spec.d, n);
    let hm = Hypermodel::new(eta, lambda, structure.clone())?;
    let p = generate_problem(
        &ProblemSpec {
            n,
            d: spec.d,
            sigma: spec.sigma,
            truth: spec.truth,
            normalize: spec.normalize,
            seed,
        },
        &hm,
    )?;
    let start = Instant::now();
    let state = solve(&p, &hm, &spec.solver)?;
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let u_star = p.u_star().expect("generated problems carry their truth");
    let rho_hat = if spec.solver.record_iterates {
        linear_rate_estimate(&state.trace, &hm).ok().and_then(|r| r.rho_hat)
    } else {
        None
    };
    let cert = certify(&p, &hm, &spec.truth, &spec.certify, seed)?;
    let (s_or_rq, q) = spec.sparsity_columns();
    Ok((
        TrialRecord {
            variant: hm.variant(),
            n,
            d: spec.d,
            k: hm.units(spec.d),
            s_or_rq,
            q,
            eta,
            lambda,
            seed,
            error_sq: (&state.u - u_star).norm_squared(),
            bound_delta: cert.delta(),
            hypotheses_ok: cert.radius.hypotheses_ok(),
            iters: state.iter,
            rho_hat,
            wall_time_ms,
        },
        state.converged,
    ))
}

fn run_cell(spec: &SweepSpec, structure: &Structure, n: usize, eta_index: usize) -> CellReport {
    let eta = spec.etas[eta_index];
    let p_max = match structure {
        Structure::Group(g) => g.p_max(),
        _ => 1,
    };
    let mut cell = CellReport {
        n,
        eta,
        lambda: spec.lambda.resolve(structure, spec.d, n),
        trials: Vec::with_capacity(spec.trials),
        median_error_sq: None,
        q25: None,
        q75: None,
        theory: corollary_rate(spec.structure.variant(), spec.rate_class(), n, structure.units(spec.d), p_max),
        completed: true,
        failures: Vec::new(),
    };
    for t in 0..spec.trials {
        let seed = spec.trial_seed(n, eta_index, t);
        match run_trial(spec, structure, n, eta, seed) {
            Ok((record, converged)) => {
                if !converged {
                    cell.completed = false;
                    cell.failures.push(format!("seed {seed}: no convergence in {} iterations", record.iters));
                }
                cell.trials.push(record);
            }
            Err(e) => {
                cell.completed = false;
                cell.failures.push(format!("seed {seed}: {e}"));
            }
        }
    }
    cell.summarize();
    cell
}

/// Run every cell, in parallel across cells when `threads > 1`. Cell order
/// in the report is `(eta, n)` grid order regardless of scheduling.
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>) -> hiermap::Result<ExperimentReport> {
    let structure = spec.structure.build(spec.d)?;
    let grid: Vec<(usize, usize)> = (0..spec.etas.len())
        .flat_map(|e| spec.n_grid.iter().map(move |&n| (n, e)))
        .collect();
    let work = || -> Vec<CellReport> {
        grid.par_iter()
            .map(|&(n, e)| run_cell(spec, &structure, n, e))
            .collect()
    };
    let cells = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| hiermap::Error::Unsupported(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let fits = fit_cells(cells.iter().filter(|c| c.eta == spec.etas[0]));
    Ok(ExperimentReport {
        spec: serde_json::to_value(spec)?,
        cells,
        fits,
    })
}

//! Certified-bound runs: every trial whose hypotheses hold must satisfy
//! `||u_hat - u*||^2 <= delta`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use hiermap::rng::derive_seed;
use hiermap::solver::{solve, SolverConfig};
use hiermap::synth::{generate_problem, ProblemSpec};

use crate::certify::{certify, Certificate, CertifySpec};
use crate::config::{Config, ConfigError, ConfigResult};
use crate::report::TrialRecord;
use crate::spec::{solver_from_config, ModelSpec, ProblemSource, MODEL_KEYS, PROBLEM_KEYS, SOLVER_KEYS, TRUTH_KEYS};

pub const RATES_KEYS: &[&str] = &["rates.trials", "rates.seed", "rates.tau_sq_factor", "rates.rsc_samples"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatesSpec {
    pub problem: ProblemSpec,
    pub model: ModelSpec,
    pub trials: usize,
    pub master_seed: u64,
    pub certify: CertifySpec,
    pub solver: SolverConfig,
}

impl RatesSpec {
    pub fn from_config(cfg: &Config, seed_override: Option<u64>) -> ConfigResult<Self> {
        let allowed: Vec<&str> = [RATES_KEYS, PROBLEM_KEYS, MODEL_KEYS, TRUTH_KEYS, SOLVER_KEYS].concat();
        cfg.check_known(&allowed)?;
        let problem = match ProblemSource::from_config(cfg, None)? {
            ProblemSource::Generated(p) => p,
            ProblemSource::Files { .. } => {
                return Err(ConfigError::new("problem.a", "certified-bound runs need generated problems"))
            }
        };
        let trials = cfg.get_usize("rates.trials")?.unwrap_or(10);
        if trials == 0 {
            return Err(ConfigError::new("rates.trials", "must be at least 1"));
        }
        let mut certify = CertifySpec::default();
        if let Some(f) = cfg.get_f64("rates.tau_sq_factor")? {
            if !(f >= 0.0) {
                return Err(ConfigError::new("rates.tau_sq_factor", format!("must be nonnegative, got {f}")));
            }
            certify.tau_sq_factor = f;
        }
        if let Some(s) = cfg.get_usize("rates.rsc_samples")? {
            if s == 0 {
                return Err(ConfigError::new("rates.rsc_samples", "must be at least 1"));
            }
            certify.rsc_samples = s;
        }
        Ok(Self {
            problem,
            model: ModelSpec::from_config(cfg)?,
            trials,
            master_seed: seed_override.or(cfg.get_u64("rates.seed")?).unwrap_or(0),
            certify,
            solver: solver_from_config(cfg)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesTrial {
    pub record: TrialRecord,
    pub certificate: Certificate,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesReport {
    pub spec: serde_json::Value,
    pub trials: Vec<RatesTrial>,
    /// Fraction of trials with `hypotheses_ok`.
    pub hypotheses_fraction: f64,
    /// Seeds of hypothesis-satisfying trials with `error_sq > delta`.
    pub violations: Vec<u64>,
    pub warning: Option<String>,
}

impl RatesReport {
    pub fn certified(&self) -> usize {
        self.trials.iter().filter(|t| t.record.hypotheses_ok).count()
    }

    pub fn all_converged(&self) -> bool {
        self.trials.iter().all(|t| t.converged)
    }
}

pub fn run_rates(spec: &RatesSpec) -> hiermap::Result<RatesReport> {
    let d = spec.problem.d;
    let n = spec.problem.n;
    let structure = spec.model.structure.build(d)?;
    let hm = spec.model.hypermodel(structure, d, n)?;
    let mut trials = Vec::with_capacity(spec.trials);
    for t in 0..spec.trials {
        let seed = derive_seed(spec.master_seed, &[t as u64]);
        let p = generate_problem(&ProblemSpec { seed, ..spec.problem }, &hm)?;
        let start = Instant::now();
        let state = solve(&p, &hm, &spec.solver)?;
        let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        let certificate = certify(&p, &hm, &spec.problem.truth, &spec.certify, seed)?;
        let error_sq = (&state.u - p.u_star().expect("generated")).norm_squared();
        let (s_or_rq, q) = match spec.problem.truth {
            hiermap::synth::TruthKind::LqBall { q, r_q, .. } | hiermap::synth::TruthKind::GroupLq { q, r_q, .. } => (r_q, q),
            hiermap::synth::TruthKind::HardSparse { s, .. }
            | hiermap::synth::TruthKind::GroupSparse { s, .. }
            | hiermap::synth::TruthKind::FrameCompressible { s, .. } => (s as f64, 0.0),
        };
        trials.push(RatesTrial {
            record: TrialRecord {
                variant: hm.variant(),
                n,
                d,
                k: hm.units(d),
                s_or_rq,
                q,
                eta: hm.eta(),
                lambda: hm.lambda(),
                seed,
                error_sq,
                bound_delta: certificate.delta(),
                hypotheses_ok: certificate.radius.hypotheses_ok(),
                iters: state.iter,
                rho_hat: None,
                wall_time_ms,
            },
            certificate,
            converged: state.converged,
        });
    }
    let certified = trials.iter().filter(|t| t.record.hypotheses_ok).count();
    let violations = trials
        .iter()
        .filter(|t| t.record.hypotheses_ok && t.record.bound_delta.is_none_or(|delta| t.record.error_sq > delta))
        .map(|t| t.record.seed)
        .collect();
    let warning = (certified == 0).then(|| {
        format!(
            "no trial satisfied the hypotheses (lambda >= threshold and tau * Psi <= sqrt(kappa) / 32); nothing was certified across {} trials",
            trials.len()
        )
    });
    Ok(RatesReport {
        spec: serde_json::to_value(spec)?,
        hypotheses_fraction: certified as f64 / trials.len() as f64,
        trials,
        violations,
        warning,
    })
}

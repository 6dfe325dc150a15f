//! Typed views of the configuration sections shared by every command.

use hiermap::frames::{make_groups, make_tight_frame, CovKind, FrameKind};
use hiermap::io::{load_matrix, load_vector};
use hiermap::solver::{LinearSolver, SolverConfig, ThetaInit};
use hiermap::synth::{ProblemSpec, SigmaSpec, TruthKind, LQ_MARGIN};
use hiermap::theory::{lambda_rule_coordinate, lambda_rule_frame, lambda_rule_group};
use hiermap::{Hypermodel, Problem, Structure, Variant};
use serde::{Deserialize, Serialize};

use crate::config::{Config, ConfigError, ConfigResult, NumberOrWord};

pub const MODEL_KEYS: &[&str] = &[
    "model.variant",
    "model.eta",
    "model.lambda",
    "model.group_size",
    "model.cov",
    "model.frame",
    "model.frame_k",
    "model.structure_seed",
];

pub const PROBLEM_KEYS: &[&str] = &[
    "problem.n",
    "problem.d",
    "problem.sigma",
    "problem.rho",
    "problem.normalize",
    "problem.seed",
    "problem.a",
    "problem.y",
    "problem.u_star",
];

pub const TRUTH_KEYS: &[&str] = &[
    "truth.kind",
    "truth.s",
    "truth.amplitude",
    "truth.q",
    "truth.r_q",
    "truth.margin",
];

pub const SOLVER_KEYS: &[&str] = &[
    "solver.max_iters",
    "solver.tol_u",
    "solver.tol_grad",
    "solver.linear_solver",
    "solver.cg_tol",
    "solver.cg_max_iters",
    "solver.theta_init",
    "solver.record_iterates",
];

/// Regularization weight: explicit, or the corollary rule of the variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaSpec {
    Value(f64),
    /// `4 sqrt(log d / n)`, `2 (sqrt(p_max / n) + sqrt(log k / n))` or
    /// `4 sqrt(log k / n)` by variant.
    Rule,
}

impl LambdaSpec {
    pub fn resolve(&self, structure: &Structure, d: usize, n: usize) -> f64 {
        match *self {
            LambdaSpec::Value(v) => v,
            LambdaSpec::Rule => match structure {
                Structure::Coordinate => lambda_rule_coordinate(d, n),
                Structure::Group(g) => lambda_rule_group(g.p_max(), g.k(), n),
                Structure::Frame(w) => lambda_rule_frame(w.k(), n),
            },
        }
    }
}

/// Structure description that can be instantiated for any `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum StructureSpec {
    Coordinate,
    Group {
        group_size: usize,
        cov: CovKind,
        seed: u64,
    },
    Frame {
        /// `None` is the `[I | Q] / sqrt(2)` construction.
        k: Option<usize>,
        seed: u64,
    },
}

impl StructureSpec {
    pub fn variant(&self) -> Variant {
        match self {
            StructureSpec::Coordinate => Variant::Coordinate,
            StructureSpec::Group { .. } => Variant::Group,
            StructureSpec::Frame { .. } => Variant::Frame,
        }
    }

    pub fn build(&self, d: usize) -> hiermap::Result<Structure> {
        Ok(match *self {
            StructureSpec::Coordinate => Structure::Coordinate,
            StructureSpec::Group { group_size, cov, seed } => {
                if group_size == 0 || d % group_size != 0 {
                    return Err(hiermap::Error::InvalidParameter {
                        name: "group_size",
                        reason: format!("{group_size} does not divide d = {d}"),
                    });
                }
                Structure::Group(make_groups(d, &vec![group_size; d / group_size], cov, seed)?)
            }
            StructureSpec::Frame { k, seed } => {
                let kind = match k {
                    None => FrameKind::IdentityPlusOrthobasis,
                    Some(k) => FrameKind::RandomRows { k },
                };
                Structure::Frame(make_tight_frame(d, kind, seed)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub structure: StructureSpec,
    pub eta: f64,
    pub lambda: LambdaSpec,
}

impl ModelSpec {
    pub fn from_config(cfg: &Config) -> ConfigResult<Self> {
        let eta = cfg.require_f64("model.eta")?;
        Self::with_eta(cfg, eta, "model.eta")
    }

    /// Same as [`Self::from_config`] with `eta` supplied separately (sweeps
    /// read it from a list).
    pub fn with_eta(cfg: &Config, eta: f64, eta_key: &str) -> ConfigResult<Self> {
        check_eta(eta_key, eta)?;
        let variant: Variant = cfg
            .get_str("model.variant")?
            .unwrap_or("coordinate")
            .parse()
            .map_err(|e: hiermap::Error| ConfigError::new("model.variant", e.to_string()))?;
        let lambda = match cfg.get_number_or_word("model.lambda", &["rule"])? {
            None | Some(NumberOrWord::Word(_)) => LambdaSpec::Rule,
            Some(NumberOrWord::Number(v)) => {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::new("model.lambda", format!("must be positive, got {v}")));
                }
                LambdaSpec::Value(v)
            }
        };
        let seed = cfg.get_u64("model.structure_seed")?.unwrap_or(0);
        let structure = match variant {
            Variant::Coordinate => StructureSpec::Coordinate,
            Variant::Group => {
                let group_size = cfg.get_usize("model.group_size")?.unwrap_or(1);
                if group_size == 0 {
                    return Err(ConfigError::new("model.group_size", "must be at least 1"));
                }
                let cov = match cfg.get_str("model.cov")?.unwrap_or("identity") {
                    "identity" => CovKind::Identity,
                    "random-spd" => CovKind::RandomSpd,
                    other => {
                        return Err(ConfigError::new(
                            "model.cov",
                            format!("expected \"identity\" or \"random-spd\", got \"{other}\""),
                        ))
                    }
                };
                StructureSpec::Group { group_size, cov, seed }
            }
            Variant::Frame => {
                let k = match cfg.get_str("model.frame")?.unwrap_or("identity-plus-orthobasis") {
                    "identity-plus-orthobasis" => None,
                    "random-rows" => Some(cfg.require_usize("model.frame_k")?),
                    other => {
                        return Err(ConfigError::new(
                            "model.frame",
                            format!("expected \"identity-plus-orthobasis\" or \"random-rows\", got \"{other}\""),
                        ))
                    }
                };
                StructureSpec::Frame { k, seed }
            }
        };
        Ok(Self { structure, eta, lambda })
    }

    pub fn hypermodel(&self, structure: Structure, d: usize, n: usize) -> hiermap::Result<Hypermodel> {
        let lambda = self.lambda.resolve(&structure, d, n);
        Hypermodel::new(self.eta, lambda, structure)
    }
}

pub fn check_eta(key: &str, eta: f64) -> ConfigResult<()> {
    if eta > 0.0 && eta < 0.5 {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("eta must lie in the open interval (0, 1/2), got {eta}")))
    }
}

pub fn truth_from_config(cfg: &Config) -> ConfigResult<TruthKind> {
    let kind = cfg.get_str("truth.kind")?.unwrap_or("hard-sparse");
    let positive = |key: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(ConfigError::new(key, format!("must be positive, got {v}")))
        }
    };
    let sparse = |cfg: &Config| -> ConfigResult<(usize, f64)> {
        let s = cfg.require_usize("truth.s")?;
        let amplitude = positive("truth.amplitude", cfg.get_f64("truth.amplitude")?.unwrap_or(1.0))?;
        Ok((s, amplitude))
    };
    let lq = |cfg: &Config| -> ConfigResult<(f64, f64, f64)> {
        let q = cfg.require_f64("truth.q")?;
        if !(q > 0.0 && q < 1.0) {
            return Err(ConfigError::new("truth.q", format!("must lie in (0, 1), got {q}")));
        }
        let r_q = positive("truth.r_q", cfg.require_f64("truth.r_q")?)?;
        let margin = cfg.get_f64("truth.margin")?.unwrap_or(LQ_MARGIN);
        if !(margin >= 0.0) {
            return Err(ConfigError::new("truth.margin", format!("must be nonnegative, got {margin}")));
        }
        Ok((q, r_q, margin))
    };
    Ok(match kind {
        "hard-sparse" => {
            let (s, amplitude) = sparse(cfg)?;
            TruthKind::HardSparse { s, amplitude }
        }
        "group-sparse" => {
            let (s, amplitude) = sparse(cfg)?;
            TruthKind::GroupSparse { s, amplitude }
        }
        "frame-compressible" => {
            let (s, amplitude) = sparse(cfg)?;
            TruthKind::FrameCompressible { s, amplitude }
        }
        "lq-ball" => {
            let (q, r_q, margin) = lq(cfg)?;
            TruthKind::LqBall { q, r_q, margin }
        }
        "group-lq" => {
            let (q, r_q, margin) = lq(cfg)?;
            TruthKind::GroupLq { q, r_q, margin }
        }
        other => {
            return Err(ConfigError::new(
                "truth.kind",
                format!(
                    "unknown kind \"{other}\" (expected hard-sparse, lq-ball, group-sparse, group-lq or frame-compressible)"
                ),
            ))
        }
    })
}

pub fn sigma_from_config(cfg: &Config) -> ConfigResult<SigmaSpec> {
    match cfg.get_str("problem.sigma")?.unwrap_or("identity") {
        "identity" => Ok(SigmaSpec::Identity),
        "ar1" => {
            let rho = cfg.require_f64("problem.rho")?;
            if !(rho.abs() < 1.0) {
                return Err(ConfigError::new("problem.rho", format!("must satisfy |rho| < 1, got {rho}")));
            }
            Ok(SigmaSpec::Ar1 { rho })
        }
        other => Err(ConfigError::new(
            "problem.sigma",
            format!("expected \"identity\" or \"ar1\", got \"{other}\""),
        )),
    }
}

pub fn solver_from_config(cfg: &Config) -> ConfigResult<SolverConfig> {
    let mut s = SolverConfig::default();
    if let Some(v) = cfg.get_usize("solver.max_iters")? {
        s.max_iters = v;
    }
    if let Some(v) = cfg.get_f64("solver.tol_u")? {
        s.tol_u = v;
    }
    if let Some(v) = cfg.get_f64("solver.tol_grad")? {
        s.tol_grad = v;
    }
    if let Some(v) = cfg.get_f64("solver.cg_tol")? {
        s.cg_tol = v;
    }
    if let Some(v) = cfg.get_usize("solver.cg_max_iters")? {
        s.cg_max_iters = v;
    }
    if let Some(v) = cfg.get_bool("solver.record_iterates")? {
        s.record_iterates = v;
    }
    s.linear_solver = match cfg.get_str("solver.linear_solver")?.unwrap_or("direct") {
        "direct" => LinearSolver::Direct,
        "cg" => LinearSolver::ConjugateGradient,
        other => {
            return Err(ConfigError::new(
                "solver.linear_solver",
                format!("expected \"direct\" or \"cg\", got \"{other}\""),
            ))
        }
    };
    s.theta_init = match cfg.get_str("solver.theta_init")?.unwrap_or("ones") {
        "ones" => ThetaInit::Ones,
        "eta-floor" => ThetaInit::EtaFloor,
        other => {
            return Err(ConfigError::new(
                "solver.theta_init",
                format!("expected \"ones\" or \"eta-floor\", got \"{other}\""),
            ))
        }
    };
    s.validate().map_err(|e| match e {
        hiermap::Error::InvalidParameter { name, reason } => ConfigError::new(format!("solver.{name}"), reason),
        other => ConfigError::new("solver", other.to_string()),
    })?;
    Ok(s)
}

/// Where a single problem comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Generated(ProblemSpec),
    Files {
        a: std::path::PathBuf,
        y: std::path::PathBuf,
        u_star: Option<std::path::PathBuf>,
    },
}

impl ProblemSource {
    pub fn from_config(cfg: &Config, seed_override: Option<u64>) -> ConfigResult<Self> {
        if let Some(a) = cfg.get_str("problem.a")? {
            let y = cfg.require_str("problem.y")?;
            return Ok(ProblemSource::Files {
                a: cfg.resolve_path(a),
                y: cfg.resolve_path(y),
                u_star: cfg.get_str("problem.u_star")?.map(|p| cfg.resolve_path(p)),
            });
        }
        let n = positive_usize(cfg, "problem.n")?;
        let d = positive_usize(cfg, "problem.d")?;
        Ok(ProblemSource::Generated(ProblemSpec {
            n,
            d,
            sigma: sigma_from_config(cfg)?,
            truth: truth_from_config(cfg)?,
            normalize: cfg.get_bool("problem.normalize")?.unwrap_or(true),
            seed: seed_override.or(cfg.get_u64("problem.seed")?).unwrap_or(0),
        }))
    }

    /// Problem plus the hypermodel with `lambda` resolved for its size.
    pub fn instantiate(&self, model: &ModelSpec) -> hiermap::Result<(Problem, Hypermodel)> {
        match self {
            ProblemSource::Generated(spec) => {
                let hm = model.hypermodel(model.structure.build(spec.d)?, spec.d, spec.n)?;
                let p = hiermap::synth::generate_problem(spec, &hm)?;
                Ok((p, hm))
            }
            ProblemSource::Files { a, y, u_star } => {
                let a = load_matrix(a)?;
                let y = load_vector(y)?;
                let (n, d) = a.shape();
                let hm = model.hypermodel(model.structure.build(d)?, d, n)?;
                let p = match u_star {
                    Some(path) => {
                        let u = load_vector(path)?;
                        if u.len() != d {
                            return Err(hiermap::Error::DimensionMismatch {
                                what: "u_star",
                                expected: d,
                                got: u.len(),
                            });
                        }
                        let eps = &y - &a * &u;
                        Problem::with_truth(a, u, eps)?
                    }
                    None => Problem::new(a, y)?,
                };
                Ok((p, hm))
            }
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            ProblemSource::Generated(s) => Some(s.seed),
            ProblemSource::Files { .. } => None,
        }
    }
}

pub fn positive_usize(cfg: &Config, key: &str) -> ConfigResult<usize> {
    let v = cfg.require_usize(key)?;
    if v == 0 {
        return Err(ConfigError::new(key, "must be at least 1"));
    }
    Ok(v)
}

//! Batch property suites over the model, solver and theory invariants.
//!
//! Every case draws its inputs from `derive_seed(seed, [suite, case])`, so a
//! failing case is reproduced by its printed seed alone. Reference values
//! come from the oracle module or from direct evaluation, never from the
//! routine under test.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use hiermap::frames::{make_groups, make_tight_frame, CovKind, FrameKind};
use hiermap::model::{
    decomposable_norm, dual_norm, f_map, objective_f, regularizer_eta, regularizer_grad, sandwich_bounds,
};
use hiermap::oracle::{finite_diff_grad, golden_section_theta};
use hiermap::rng::{derive_seed, rng_from_seed, standard_normal_matrix, standard_normal_vector, Rng};
use hiermap::solver::{solve, SolverConfig};
use hiermap::synth::{generate_problem, ProblemSpec, SigmaSpec, TruthKind};
use hiermap::theory::{cone_check, lambda_rule_coordinate, lambda_rule_group, lambda_threshold};
use hiermap::{Hypermodel, Problem, Structure};

use crate::certify::truth_subspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Sandwich,
    Duality,
    Theta,
    Gradient,
    Convexity,
    Cone,
    Frame,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Sandwich,
        Suite::Duality,
        Suite::Theta,
        Suite::Gradient,
        Suite::Convexity,
        Suite::Cone,
        Suite::Frame,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Sandwich => "sandwich",
            Suite::Duality => "duality",
            Suite::Theta => "theta",
            Suite::Gradient => "gradient",
            Suite::Convexity => "convexity",
            Suite::Cone => "cone",
            Suite::Frame => "frame",
        }
    }

    /// Default case count. For `sandwich`, `duality`, `gradient` and
    /// `convexity` this is per variant (and per `eta` for `sandwich`).
    pub fn default_cases(&self) -> usize {
        match self {
            Suite::Theta => 10_000,
            Suite::Cone => 100,
            Suite::Frame => 10,
            _ => 1_000,
        }
    }

    fn id(&self) -> u64 {
        Suite::ALL.iter().position(|s| s == self).expect("listed") as u64
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .iter()
            .copied()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(Suite::name).collect();
                format!("unknown suite `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub passed: usize,
    pub failed: usize,
    /// Inputs and seed of the first failing case.
    pub reproducer: Option<String>,
    /// Largest observed violation measure (suite-specific, `<= 0` is a pass
    /// for margin-type checks).
    pub worst: f64,
}

impl SuiteResult {
    fn new(suite: Suite) -> Self {
        Self {
            suite,
            passed: 0,
            failed: 0,
            reproducer: None,
            worst: f64::NEG_INFINITY,
        }
    }

    pub fn ok(&self) -> bool {
        self.failed == 0 && self.passed > 0
    }

    pub fn total(&self) -> usize {
        self.passed + self.failed
    }

    fn record(&mut self, pass: bool, measure: f64, repro: impl FnOnce() -> String) {
        self.worst = self.worst.max(measure);
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
            if self.reproducer.is_none() {
                self.reproducer = Some(repro());
            }
        }
    }

    fn fail_with(&mut self, repro: String) {
        self.failed += 1;
        if self.reproducer.is_none() {
            self.reproducer = Some(repro);
        }
    }
}

/// Hypermodels covering each variant at a small dimension, with a
/// non-identity group covariance and an overcomplete non-canonical frame.
pub fn variant_fixtures(eta: f64) -> Vec<(&'static str, Hypermodel, usize)> {
    let groups = make_groups(6, &[2, 3, 1], CovKind::RandomSpd, 11).expect("valid groups");
    let frame = make_tight_frame(4, FrameKind::RandomRows { k: 7 }, 12).expect("valid frame");
    vec![
        ("coordinate", Hypermodel::coordinate(eta, 1.0).expect("valid"), 5),
        ("group", Hypermodel::group(eta, 1.0, groups).expect("valid"), 6),
        ("frame", Hypermodel::frame(eta, 1.0, frame).expect("valid"), 4),
    ]
}

/// Gaussian vector with a log-uniform overall scale in `[1e-3, 1e2]` and
/// occasional exact zeros, so both regimes of the penalty are exercised.
fn random_point(d: usize, rng: &mut Rng) -> DVector<f64> {
    let scale = 10f64.powf(rng.random_range(-3.0..2.0));
    let mut u = standard_normal_vector(d, rng) * scale;
    for x in u.iter_mut() {
        if rng.random_range(0.0..1.0) < 0.2 {
            *x = 0.0;
        }
    }
    u
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

fn rel_tol(tol: f64, scale: f64) -> f64 {
    tol * scale.abs().max(1.0)
}

pub const SANDWICH_ETAS: [f64; 3] = [0.4, 0.1, 0.01];

/// Containment `lower <= R_eta(u) <= upper`, plus attainment of the upper
/// bound at `u = 0` to `1e-12`.
pub fn sandwich(cases: usize, seed: u64) -> SuiteResult {
    let mut res = SuiteResult::new(Suite::Sandwich);
    for (ei, &eta) in SANDWICH_ETAS.iter().enumerate() {
        for (vi, (name, hm, d)) in variant_fixtures(eta).into_iter().enumerate() {
            let zero = DVector::zeros(d);
            match (regularizer_eta(&zero, &hm), sandwich_bounds(&zero, &hm)) {
                (Ok(r), Ok(b)) => {
                    let gap = (b.upper - r).abs();
                    res.record(gap <= 1e-12, gap, || format!("variant={name} eta={eta} u=0: upper={} R={r}", b.upper));
                }
                (Err(e), _) | (_, Err(e)) => res.fail_with(format!("variant={name} eta={eta} u=0: {e}")),
            }
            for case in 0..cases {
                let case_seed = derive_seed(seed, &[Suite::Sandwich.id(), ei as u64, vi as u64, case as u64]);
                let u = random_point(d, &mut rng_from_seed(case_seed));
                match (regularizer_eta(&u, &hm), sandwich_bounds(&u, &hm)) {
                    (Ok(r), Ok(b)) => {
                        let tol = rel_tol(1e-12, r);
                        let violation = (b.lower - r).max(r - b.upper);
                        res.record(violation <= tol, violation, || {
                            format!(
                                "variant={name} eta={eta} seed={case_seed} u={} lower={} R={r} upper={}",
                                fmt_vec(&u),
                                b.lower,
                                b.upper
                            )
                        });
                    }
                    (Err(e), _) | (_, Err(e)) => res.fail_with(format!("variant={name} seed={case_seed}: {e}")),
                }
            }
        }
    }
    res
}

/// Hoelder `|<u, v>| <= R(u) R*(v)`, with attainment for the coordinate
/// and group norms by the explicit maximizer.
pub fn duality(cases: usize, seed: u64) -> SuiteResult {
    let mut res = SuiteResult::new(Suite::Duality);
    for (vi, (name, hm, d)) in variant_fixtures(0.1).into_iter().enumerate() {
        for case in 0..cases {
            let case_seed = derive_seed(seed, &[Suite::Duality.id(), vi as u64, case as u64]);
            let mut rng = rng_from_seed(case_seed);
            let u = random_point(d, &mut rng);
            let v = standard_normal_vector(d, &mut rng);
            let (ru, rv) = match (decomposable_norm(&u, &hm), dual_norm(&v, &hm)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    res.fail_with(format!("variant={name} seed={case_seed}: {e}"));
                    continue;
                }
            };
            let excess = u.dot(&v).abs() - ru * rv;
            let mut pass = excess <= rel_tol(1e-12, ru * rv);
            if let Some(maximizer) = dual_maximizer(&v, &hm) {
                let r = decomposable_norm(&maximizer, &hm).unwrap_or(f64::NAN);
                pass &= (r - 1.0).abs() <= 1e-10 && (maximizer.dot(&v) - rv).abs() <= rel_tol(1e-10, rv);
            }
            res.record(pass, excess, || {
                format!("variant={name} seed={case_seed} u={} v={} R(u)={ru} R*(v)={rv}", fmt_vec(&u), fmt_vec(&v))
            });
        }
    }
    res
}

/// Unit-norm `u` with `<u, v> = R*(v)`, where a closed form exists.
fn dual_maximizer(v: &DVector<f64>, hm: &Hypermodel) -> Option<DVector<f64>> {
    match hm.structure() {
        Structure::Coordinate => {
            let j = v.iamax();
            let mut u = DVector::zeros(v.len());
            u[j] = v[j].signum();
            Some(u)
        }
        Structure::Group(g) => {
            let (j, _) = (0..g.k())
                .map(|j| (j, g.dual_c_norm(j, &g.gather(j, v))))
                .max_by(|a, b| a.1.total_cmp(&b.1))?;
            let vg = g.gather(j, v);
            let cv = g.cov(j) * &vg;
            let scale = vg.dot(&cv).sqrt();
            let mut u = DVector::zeros(v.len());
            for (&i, x) in g.group(j).iter().zip(cv.iter()) {
                u[i] = x / scale;
            }
            Some(u)
        }
        Structure::Frame(_) => None,
    }
}

/// Closed-form theta against golden-section minimization, over scalar
/// `(u, eta)` and over the group and frame magnitudes.
pub fn theta(cases: usize, seed: u64) -> SuiteResult {
    let mut res = SuiteResult::new(Suite::Theta);
    for case in 0..cases {
        let case_seed = derive_seed(seed, &[Suite::Theta.id(), 0, case as u64]);
        let mut rng = rng_from_seed(case_seed);
        let eta = rng.random_range(1e-3..0.49);
        let mag = 10f64.powf(rng.random_range(-4.0..1.0));
        let u_val = if rng.random::<bool>() { mag } else { -mag };
        let hm = Hypermodel::coordinate(eta, 1.0).expect("valid eta");
        let closed = f_map(&DVector::from_element(1, u_val), &hm).map(|t| t[0]);
        let oracle = golden_section_theta(u_val, eta);
        match closed {
            Ok(c) => {
                let diff = (c - oracle).abs();
                res.record(diff <= 1e-6, diff, || {
                    format!("coordinate seed={case_seed} u={u_val:?} eta={eta:?} closed={c} oracle={oracle}")
                });
            }
            Err(e) => res.fail_with(format!("coordinate seed={case_seed}: {e}")),
        }
    }
    // Structured analogues: theta_j depends on u only through x_j.
    let structured = (cases / 10).max(1);
    for (vi, (name, hm0, d)) in variant_fixtures(0.1).into_iter().enumerate().skip(1) {
        for case in 0..structured {
            let case_seed = derive_seed(seed, &[Suite::Theta.id(), 1 + vi as u64, case as u64]);
            let mut rng = rng_from_seed(case_seed);
            let eta = rng.random_range(1e-3..0.49);
            let hm = hm0.with_eta(eta).expect("valid eta");
            let u = standard_normal_vector(d, &mut rng);
            let (theta, x) = match (f_map(&u, &hm), hm.structure().magnitudes_sq(&u)) {
                (Ok(t), Ok(x)) => (t, x),
                (Err(e), _) | (_, Err(e)) => {
                    res.fail_with(format!("variant={name} seed={case_seed}: {e}"));
                    continue;
                }
            };
            let diff = x
                .iter()
                .zip(theta.iter())
                .map(|(&xj, &tj)| (tj - golden_section_theta(xj.sqrt(), eta)).abs())
                .fold(0.0, f64::max);
            res.record(diff <= 1e-6, diff, || {
                format!("variant={name} seed={case_seed} eta={eta:?} u={}", fmt_vec(&u))
            });
        }
    }
    res
}

/// `regularizer_grad` against central differences of `regularizer_eta`.
pub fn gradient(cases: usize, seed: u64) -> SuiteResult {
    let mut res = SuiteResult::new(Suite::Gradient);
    for (vi, (name, hm0, d)) in variant_fixtures(0.1).into_iter().enumerate() {
        for case in 0..cases {
            let case_seed = derive_seed(seed, &[Suite::Gradient.id(), vi as u64, case as u64]);
            let mut rng = rng_from_seed(case_seed);
            let eta = rng.random_range(0.01..0.49);
            let hm = hm0.with_eta(eta).expect("valid eta");
            let u = standard_normal_vector(d, &mut rng) * 10f64.powf(rng.random_range(-1.0..1.0));
            let analytic = match regularizer_grad(&u, &hm) {
                Ok(g) => g,
                Err(e) => {
                    res.fail_with(format!("variant={name} seed={case_seed}: {e}"));
                    continue;
                }
            };
            let numeric = finite_diff_grad(|x| regularizer_eta(x, &hm).unwrap_or(f64::NAN), &u, 1e-6);
            let diff = (&analytic - &numeric).amax();
            res.record(diff <= 1e-5, diff, || {
                format!("variant={name} seed={case_seed} eta={eta:?} u={}", fmt_vec(&u))
            });
        }
    }
    res
}

/// Midpoint convexity of `R_eta` and of `F` on a random data term.
pub fn convexity(cases: usize, seed: u64) -> SuiteResult {
    let mut res = SuiteResult::new(Suite::Convexity);
    for (vi, (name, hm0, d)) in variant_fixtures(0.1).into_iter().enumerate() {
        for case in 0..cases {
            let case_seed = derive_seed(seed, &[Suite::Convexity.id(), vi as u64, case as u64]);
            let mut rng = rng_from_seed(case_seed);
            let eta = rng.random_range(1e-3..0.49);
            let hm = hm0.with_eta(eta).expect("valid eta");
            let u = random_point(d, &mut rng);
            let v = random_point(d, &mut rng);
            let mid = (&u + &v) * 0.5;
            let p = Problem::new(standard_normal_matrix(d + 2, d, &mut rng), standard_normal_vector(d + 2, &mut rng))
                .expect("consistent shapes");
            let excess = |f: &dyn Fn(&DVector<f64>) -> hiermap::Result<f64>| -> hiermap::Result<f64> {
                let (a, b, m) = (f(&u)?, f(&v)?, f(&mid)?);
                Ok(m - 0.5 * (a + b) - rel_tol(1e-12, 0.5 * (a.abs() + b.abs())))
            };
            let r = excess(&|x| regularizer_eta(x, &hm)).and_then(|a| Ok(a.max(excess(&|x| objective_f(x, &p, &hm))?)));
            match r {
                Ok(worst) => res.record(worst <= 0.0, worst, || {
                    format!("variant={name} seed={case_seed} eta={eta:?} u={} v={}", fmt_vec(&u), fmt_vec(&v))
                }),
                Err(e) => res.fail_with(format!("variant={name} seed={case_seed}: {e}")),
            }
        }
    }
    res
}

/// Problem sizes of the end-to-end cone trials.
pub const CONE_N: usize = 64;
pub const CONE_D: usize = 128;
pub const CONE_ETA: f64 = 0.01;

/// End-to-end cone membership: generate, set
/// `lambda = max(rule, lambda_threshold)`, solve, and test the error.
/// Even cases use coordinate sparsity (`s = 4`), odd cases groups of four
/// (`s = 2` active).
pub fn cone(cases: usize, seed: u64) -> SuiteResult {
    let mut res = SuiteResult::new(Suite::Cone);
    let groups = make_groups(CONE_D, &[4; CONE_D / 4], CovKind::Identity, 0).expect("valid groups");
    for case in 0..cases {
        let case_seed = derive_seed(seed, &[Suite::Cone.id(), case as u64]);
        let (name, hm, truth, rule) = if case % 2 == 0 {
            (
                "coordinate",
                Hypermodel::coordinate(CONE_ETA, 1.0).expect("valid"),
                TruthKind::HardSparse { s: 4, amplitude: 3.0 },
                lambda_rule_coordinate(CONE_D, CONE_N),
            )
        } else {
            (
                "group",
                Hypermodel::group(CONE_ETA, 1.0, groups.clone()).expect("valid"),
                TruthKind::GroupSparse { s: 2, amplitude: 3.0 },
                lambda_rule_group(4, CONE_D / 4, CONE_N),
            )
        };
        let outcome = (|| -> hiermap::Result<(bool, f64)> {
            let spec = ProblemSpec {
                n: CONE_N,
                d: CONE_D,
                sigma: SigmaSpec::Identity,
                truth,
                normalize: true,
                seed: case_seed,
            };
            let p = generate_problem(&spec, &hm)?;
            let threshold = lambda_threshold(p.a(), p.eps().expect("generated"), &hm)?;
            let hm = hm.with_lambda(rule.max(threshold))?;
            let state = solve(&p, &hm, &SolverConfig::default())?;
            let u_star = p.u_star().expect("generated");
            let m = truth_subspace(&p, &hm, &truth)?;
            let c = cone_check(&(&state.u - u_star), u_star, &m, &hm)?;
            Ok((c.member && state.converged, -c.slack))
        })();
        match outcome {
            Ok((member, neg_slack)) => res.record(member, neg_slack, || {
                format!("variant={name} seed={case_seed} n={CONE_N} d={CONE_D} eta={CONE_ETA} slack={}", -neg_slack)
            }),
            Err(e) => res.fail_with(format!("variant={name} seed={case_seed}: {e}")),
        }
    }
    res
}

/// `||W W^T - I||_F <= 1e-10` and isometry of the analysis operator on every
/// construction, for `cases` seeds per shape.
pub fn frame(cases: usize, seed: u64) -> SuiteResult {
    let mut res = SuiteResult::new(Suite::Frame);
    for case in 0..cases {
        for d in [2usize, 3, 5, 16, 33] {
            let kinds = [
                FrameKind::IdentityPlusOrthobasis,
                FrameKind::RandomRows { k: d },
                FrameKind::RandomRows { k: d + 1 },
                FrameKind::RandomRows { k: 3 * d },
            ];
            for (ki, kind) in kinds.into_iter().enumerate() {
                let case_seed = derive_seed(seed, &[Suite::Frame.id(), d as u64, ki as u64, case as u64]);
                match make_tight_frame(d, kind, case_seed) {
                    Ok(w) => {
                        let u = standard_normal_vector(d, &mut rng_from_seed(case_seed ^ 1));
                        let iso = (w.analysis(&u).norm() - u.norm()).abs();
                        let defect = w.tightness_defect();
                        res.record(defect <= 1e-10 && iso <= 1e-10 * u.norm().max(1.0), defect, || {
                            format!("kind={kind:?} d={d} seed={case_seed} defect={defect:e} isometry_gap={iso:e}")
                        });
                    }
                    Err(e) => res.fail_with(format!("kind={kind:?} d={d} seed={case_seed}: {e}")),
                }
            }
        }
    }
    res
}

pub fn run_suite(suite: Suite, cases: usize, seed: u64) -> SuiteResult {
    match suite {
        Suite::Sandwich => sandwich(cases, seed),
        Suite::Duality => duality(cases, seed),
        Suite::Theta => theta(cases, seed),
        Suite::Gradient => gradient(cases, seed),
        Suite::Convexity => convexity(cases, seed),
        Suite::Cone => cone(cases, seed),
        Suite::Frame => frame(cases, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("sandwhich".parse::<Suite>().unwrap_err().contains("sandwich"));
    }

    #[test]
    fn small_runs_pass() {
        for s in Suite::ALL {
            let cases = match s {
                Suite::Cone => 2,
                Suite::Frame => 1,
                _ => 20,
            };
            let r = run_suite(s, cases, 3);
            assert!(r.ok(), "{s}: {:?}", r.reproducer);
        }
    }
}

//! Alternating minimization of `J(u, theta)`.
//!
//! Each sweep solves the regularized normal equations
//! `(A^T A / n + alpha M_theta) u = A^T y / n` with `alpha = lambda / sqrt 2`
//! and then sets `theta = f(u)` in closed form. `M_theta` is `D_theta^{-1}`,
//! `blockdiag(C_j^{-1} / theta_j)` or `W D_theta^{-1} W^T`.
//!
//! For the coordinate and group models the direct solver works with the
//! rescaled system `(T^T G T + alpha I) z = T^T b`, `u = T z`, where
//! `T^T M_theta T = I`. Its spectrum is bounded below by `alpha`, so tiny
//! `theta` entries do not degrade the factorization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::error::{check_len, invalid, Error, Result};
use crate::model::{
    f_map, objective_f, objective_j, regularizer_grad, Hypermodel, Problem,
    Structure, ThetaVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolver {
    Direct,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaInit {
    /// `theta^0 = 1`, the value of the normalized prior scale.
    Ones,
    /// `theta^0 = eta`, the smallest value the update can produce.
    EtaFloor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol_u: f64,
    pub tol_grad: f64,
    pub linear_solver: LinearSolver,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub theta_init: ThetaInit,
    /// Keep every iterate and polish the final point so that
    /// [`linear_rate_estimate`] can measure errors against it.
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol_u: 1e-10,
            tol_grad: 1e-8,
            linear_solver: LinearSolver::Direct,
            cg_tol: 1e-13,
            cg_max_iters: 2_000,
            theta_init: ThetaInit::Ones,
            record_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        for (name, v) in [
            ("tol_u", self.tol_u),
            ("tol_grad", self.tol_grad),
            ("cg_tol", self.cg_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.cg_max_iters == 0 {
            return Err(invalid("cg_max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// One row of the convergence trace.
///
/// `j` is `J(u^l, theta^{l-1})` (after the u-update, before the theta-update)
/// and `f` is `F(u^l) = J(u^l, theta^l)`. Both sequences are non-increasing
/// and interleave: `f_{l-1} >= j_l >= f_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub j: f64,
    pub f: f64,
    pub step_norm: f64,
    pub grad_inf_norm: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    /// `u^1, u^2, ...` when iterates are recorded.
    #[serde(skip)]
    pub iterates: Vec<DVector<f64>>,
    /// High-accuracy limit point used as `u_hat` for post-hoc errors.
    #[serde(skip)]
    pub reference: Option<(DVector<f64>, ThetaVector)>,
    /// `||u^l - u_hat||_{D_theta_hat}` aligned with `records`.
    pub mahalanobis_errors: Vec<f64>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest increase of either objective column, relative to `max(1, |value|)`.
    pub fn max_ascent(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        let mut prev_f: Option<f64> = None;
        for r in &self.records {
            if let Some(pf) = prev_f {
                worst = worst.max((r.j - pf) / pf.abs().max(1.0));
            }
            worst = worst.max((r.f - r.j) / r.j.abs().max(1.0));
            prev_f = Some(r.f);
        }
        worst
    }

    /// Descent holds with slack `tol * max(1, |value|)` at every step.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.records.len() < 2 || self.max_ascent() <= tol
    }

    /// CSV with columns `iter,J,F,step_norm,grad_inf_norm` and, when
    /// available, `mahalanobis_error`.
    pub fn to_csv(&self) -> String {
        let with_err = self.mahalanobis_errors.len() == self.records.len() && !self.records.is_empty();
        let mut out = String::from("iter,J,F,step_norm,grad_inf_norm");
        if with_err {
            out.push_str(",mahalanobis_error");
        }
        out.push('\n');
        for (i, r) in self.records.iter().enumerate() {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e}",
                r.iter, r.j, r.f, r.step_norm, r.grad_inf_norm
            ));
            if with_err {
                out.push_str(&format!(",{:e}", self.mahalanobis_errors[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Iterate, iteration count and trace at termination.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub u: DVector<f64>,
    pub theta: ThetaVector,
    pub iter: usize,
    pub converged: bool,
    pub trace: ConvergenceTrace,
}

/// `G = A^T A / n` and `b = A^T y / n`, shared by every u-update.
#[derive(Debug, Clone)]
pub struct NormalSystem {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl NormalSystem {
    pub fn new(p: &Problem) -> Self {
        let n = p.n() as f64;
        let gram = p.a().tr_mul(p.a()) / n;
        let rhs = p.a().tr_mul(p.y()) / n;
        Self { gram, rhs }
    }

    pub fn d(&self) -> usize {
        self.rhs.len()
    }

    /// `grad F(u) = G u - b + lambda grad R_eta(u)`.
    pub fn gradient_f(&self, u: &DVector<f64>, hm: &Hypermodel) -> Result<DVector<f64>> {
        let mut g = &self.gram * u - &self.rhs;
        g.axpy(hm.lambda(), &regularizer_grad(u, hm)?, 1.0);
        Ok(g)
    }
}

/// Explicit `M_theta` (d x d).
pub fn weight_matrix(theta: &ThetaVector, structure: &Structure, d: usize) -> Result<DMatrix<f64>> {
    check_len("theta", structure.units(d), theta.len())?;
    Ok(match structure {
        Structure::Coordinate => DMatrix::from_diagonal(&theta.as_vector().map(|t| 1.0 / t)),
        Structure::Group(g) => {
            let mut m = DMatrix::zeros(d, d);
            for j in 0..g.k() {
                let idx = g.group(j);
                let cinv = g.cov_inv(j);
                for (a, &ia) in idx.iter().enumerate() {
                    for (b, &ib) in idx.iter().enumerate() {
                        m[(ia, ib)] = cinv[(a, b)] / theta[j];
                    }
                }
            }
            m
        }
        Structure::Frame(w) => {
            let wm = w.matrix();
            let mut scaled = wm.clone();
            for (mut col, &t) in scaled.column_iter_mut().zip(theta.iter()) {
                col /= t;
            }
            scaled * wm.transpose()
        }
    })
}

/// `M_theta v` without forming `M_theta`.
pub fn apply_weight(theta: &ThetaVector, structure: &Structure, v: &DVector<f64>) -> DVector<f64> {
    match structure {
        Structure::Coordinate => v.component_div(theta.as_vector()),
        Structure::Group(g) => {
            let mut out = DVector::zeros(v.len());
            for j in 0..g.k() {
                let vg = g.gather(j, v);
                let block = if g.is_identity(j) { vg } else { g.cov_inv(j) * vg };
                for (&i, x) in g.group(j).iter().zip(block.iter()) {
                    out[i] = x / theta[j];
                }
            }
            out
        }
        Structure::Frame(w) => w.synthesis(&w.analysis(v).component_div(theta.as_vector())),
    }
}

/// `sqrt(v^T M_theta v)`: `D_theta^{-1}` weighting for the coordinate and
/// group models and `W D_theta^{-1} W^T` for frames.
pub fn mahalanobis_norm(v: &DVector<f64>, theta: &ThetaVector, hm: &Hypermodel) -> Result<f64> {
    hm.structure().check_dim(v.len())?;
    check_len("theta", hm.units(v.len()), theta.len())?;
    if let Some((index, &value)) = theta.iter().enumerate().find(|(_, t)| !(**t > 0.0)) {
        return Err(Error::NonPositiveTheta { index, value });
    }
    Ok(v.dot(&apply_weight(theta, hm.structure(), v)).max(0.0).sqrt())
}

/// Exact minimizer of `u -> J(u, theta)`.
pub fn u_update(theta: &ThetaVector, p: &Problem, hm: &Hypermodel, cfg: &SolverConfig) -> Result<DVector<f64>> {
    hm.structure().check_dim(p.d())?;
    let sys = NormalSystem::new(p);
    solve_normal(&sys, theta, hm, cfg, None)
}

fn solve_normal(
    sys: &NormalSystem,
    theta: &ThetaVector,
    hm: &Hypermodel,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let d = sys.d();
    check_len("theta", hm.units(d), theta.len())?;
    if let Some((index, &value)) = theta.iter().enumerate().find(|(_, t)| !(**t > 0.0)) {
        return Err(Error::NonPositiveTheta { index, value });
    }
    let alpha = hm.lambda() / SQRT_2;
    match cfg.linear_solver {
        LinearSolver::Direct => direct_solve(sys, theta, hm.structure(), alpha),
        LinearSolver::ConjugateGradient => {
            let x0 = warm.cloned().unwrap_or_else(|| DVector::zeros(d));
            match cg_solve(sys, theta, hm.structure(), alpha, x0, cfg.cg_tol, cfg.cg_max_iters) {
                Some(u) => Ok(u),
                // Stagnation near machine precision: finish with a factorization.
                None => direct_solve(sys, theta, hm.structure(), alpha),
            }
        }
    }
}

fn direct_solve(sys: &NormalSystem, theta: &ThetaVector, structure: &Structure, alpha: f64) -> Result<DVector<f64>> {
    let d = sys.d();
    match structure {
        Structure::Coordinate => {
            let s = theta.as_vector().map(f64::sqrt);
            let mut h = sys.gram.clone();
            for j in 0..d {
                for i in 0..d {
                    h[(i, j)] *= s[i] * s[j];
                }
                h[(j, j)] += alpha;
            }
            let z = h
                .cholesky()
                .ok_or(Error::NotPositiveDefinite)?
                .solve(&sys.rhs.component_mul(&s));
            Ok(z.component_mul(&s))
        }
        Structure::Group(g) => {
            // T = blockdiag(sqrt(theta_j) L_j), so T^T M_theta T = I.
            let mut t = DMatrix::zeros(d, d);
            for j in 0..g.k() {
                let idx = g.group(j);
                let l = g.cov_cholesky(j);
                let st = theta[j].sqrt();
                for (a, &ia) in idx.iter().enumerate() {
                    for (b, &ib) in idx.iter().enumerate() {
                        t[(ia, ib)] = st * l[(a, b)];
                    }
                }
            }
            let mut h = t.tr_mul(&(&sys.gram * &t));
            for i in 0..d {
                h[(i, i)] += alpha;
            }
            h = (&h + h.transpose()) * 0.5;
            let z = h
                .cholesky()
                .ok_or(Error::NotPositiveDefinite)?
                .solve(&t.tr_mul(&sys.rhs));
            Ok(t * z)
        }
        Structure::Frame(_) => {
            let m = weight_matrix(theta, structure, d)?;
            let mut h = &sys.gram + m * alpha;
            h = (&h + h.transpose()) * 0.5;
            Ok(h.cholesky().ok_or(Error::NotPositiveDefinite)?.solve(&sys.rhs))
        }
    }
}

/// Jacobi-preconditioned CG on `(G + alpha M_theta) u = b`. Returns `None`
/// if the relative residual does not reach `tol` within `max_iters`.
fn cg_solve(
    sys: &NormalSystem,
    theta: &ThetaVector,
    structure: &Structure,
    alpha: f64,
    mut x: DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Option<DVector<f64>> {
    let d = sys.d();
    let apply = |v: &DVector<f64>| -> DVector<f64> {
        let mut out = &sys.gram * v;
        out.axpy(alpha, &apply_weight(theta, structure, v), 1.0);
        out
    };
    let mut diag = sys.gram.diagonal();
    match structure {
        Structure::Coordinate => diag += theta.as_vector().map(|t| alpha / t),
        Structure::Group(g) => {
            for j in 0..g.k() {
                let cinv = g.cov_inv(j);
                for (a, &i) in g.group(j).iter().enumerate() {
                    diag[i] += alpha * cinv[(a, a)] / theta[j];
                }
            }
        }
        Structure::Frame(w) => {
            let wm = w.matrix();
            for i in 0..d {
                let s: f64 = (0..w.k()).map(|c| wm[(i, c)] * wm[(i, c)] / theta[c]).sum();
                diag[i] += alpha * s;
            }
        }
    }
    let inv_diag = diag.map(|v| 1.0 / v);
    let b_norm = sys.rhs.norm();
    if b_norm == 0.0 {
        return Some(DVector::zeros(d));
    }
    let mut r = &sys.rhs - apply(&x);
    let mut z = r.component_mul(&inv_diag);
    let mut pdir = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iters {
        if r.norm() <= tol * b_norm {
            return Some(x);
        }
        let ap = apply(&pdir);
        let denom = pdir.dot(&ap);
        if !(denom > 0.0) {
            return None;
        }
        let step = rz / denom;
        x.axpy(step, &pdir, 1.0);
        r.axpy(-step, &ap, 1.0);
        z = r.component_mul(&inv_diag);
        let rz_new = r.dot(&z);
        pdir = &z + &pdir * (rz_new / rz);
        rz = rz_new;
    }
    (r.norm() <= tol * b_norm).then_some(x)
}

fn initial_theta(hm: &Hypermodel, d: usize, init: ThetaInit) -> ThetaVector {
    let value = match init {
        ThetaInit::Ones => 1.0,
        ThetaInit::EtaFloor => hm.eta(),
    };
    ThetaVector::new(DVector::from_element(hm.units(d), value)).expect("positive initial theta")
}

fn theta_from(u: &DVector<f64>, hm: &Hypermodel) -> Result<ThetaVector> {
    f_map(u, hm)
}

/// Relative step test; an exactly repeated iterate always passes.
fn small_step(step: f64, u: &DVector<f64>, tol: f64) -> bool {
    step == 0.0 || step <= tol * u.norm()
}

/// Run the alternating scheme until the relative step is at most `tol_u`
/// and `||grad F||_inf <= tol_grad`, or until `max_iters` sweeps.
///
/// Hitting `max_iters` is not an error; check [`SolverState::converged`].
pub fn solve(p: &Problem, hm: &Hypermodel, cfg: &SolverConfig) -> Result<SolverState> {
    cfg.validate()?;
    hm.structure().check_dim(p.d())?;
    let sys = NormalSystem::new(p);
    let d = p.d();
    let mut theta = initial_theta(hm, d, cfg.theta_init);
    let mut u = DVector::zeros(d);
    let mut trace = ConvergenceTrace::default();
    let mut converged = false;
    let mut iter = 0;

    while iter < cfg.max_iters {
        iter += 1;
        let u_new = solve_normal(&sys, &theta, hm, cfg, Some(&u))?;
        let j_val = objective_j(&u_new, &theta, p, hm)?;
        let theta_new = theta_from(&u_new, hm)?;
        let f_val = objective_f(&u_new, p, hm)?;
        let step = (&u_new - &u).norm();
        let grad = sys.gradient_f(&u_new, hm)?.amax();
        trace.records.push(TraceRecord {
            iter,
            j: j_val,
            f: f_val,
            step_norm: step,
            grad_inf_norm: grad,
        });
        if cfg.record_iterates {
            trace.iterates.push(u_new.clone());
        }
        let done = small_step(step, &u_new, cfg.tol_u) && grad <= cfg.tol_grad;
        u = u_new;
        theta = theta_new;
        if done {
            converged = true;
            break;
        }
    }

    if cfg.record_iterates {
        trace.reference = Some(polish(&sys, u.clone(), hm, cfg)?);
    }

    Ok(SolverState {
        u,
        theta,
        iter,
        converged,
        trace,
    })
}

/// Continue the fixed-point iteration past the stopping rule until the step
/// stalls at rounding level, giving a reference point for error curves.
fn polish(sys: &NormalSystem, mut u: DVector<f64>, hm: &Hypermodel, cfg: &SolverConfig) -> Result<(DVector<f64>, ThetaVector)> {
    let mut theta = theta_from(&u, hm)?;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..cfg.max_iters {
        let u_new = solve_normal(sys, &theta, hm, cfg, Some(&u))?;
        let step = (&u_new - &u).norm();
        u = u_new;
        theta = theta_from(&u, hm)?;
        if small_step(step, &u, 1e-15) {
            break;
        }
        if step < best {
            best = step;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 20 {
                break;
            }
        }
    }
    Ok((u, theta))
}

/// Error floor below which Mahalanobis errors are treated as converged.
pub const ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Median of `tail_ratios`; `None` when the tail is empty.
    pub rho_hat: Option<f64>,
    pub tail_ratios: Vec<f64>,
    /// `e^l = ||u^l - u_hat||_{D_theta_hat}` for every recorded iterate.
    pub errors: Vec<f64>,
}

impl RateEstimate {
    /// Absolute difference between the medians of the two halves of the tail.
    pub fn tail_spread(&self) -> Option<f64> {
        let n = self.tail_ratios.len();
        if n < 2 {
            return None;
        }
        let (a, b) = self.tail_ratios.split_at(n / 2);
        Some((median(a)? - median(b)?).abs())
    }
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Ratios `e^{l+1} / e^l` over the second half of the iterations that lie
/// above [`ERROR_FLOOR`]. Requires a trace recorded with
/// `record_iterates = true` and at least 10 iterations.
pub fn linear_rate_estimate(trace: &ConvergenceTrace, hm: &Hypermodel) -> Result<RateEstimate> {
    let (u_hat, theta_hat) = trace
        .reference
        .as_ref()
        .ok_or_else(|| invalid("trace", "no reference point; solve with record_iterates = true"))?;
    if trace.iterates.len() < 10 {
        return Err(invalid(
            "trace",
            format!("needs at least 10 recorded iterations, got {}", trace.iterates.len()),
        ));
    }
    let errors = trace
        .iterates
        .iter()
        .map(|u| mahalanobis_norm(&(u - u_hat), theta_hat, hm))
        .collect::<Result<Vec<_>>>()?;
    let above = errors.iter().take_while(|&&e| e >= ERROR_FLOOR).count();
    let tail = &errors[above / 2..above];
    let tail_ratios: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(RateEstimate {
        rho_hat: median(&tail_ratios),
        tail_ratios,
        errors,
    })
}

/// Attach post-hoc Mahalanobis errors to a trace for CSV export.
pub fn annotate_trace(trace: &mut ConvergenceTrace, estimate: &RateEstimate) {
    trace.mahalanobis_errors = estimate.errors.clone();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{make_groups, make_tight_frame, CovKind, FrameKind};
    use crate::rng::{rng_from_seed, standard_normal_matrix, standard_normal_vector};
    use approx::assert_relative_eq;

    fn random_problem(n: usize, d: usize, seed: u64) -> Problem {
        let mut rng = rng_from_seed(seed);
        let a = standard_normal_matrix(n, d, &mut rng);
        let y = standard_normal_vector(n, &mut rng);
        Problem::new(a, y).unwrap()
    }

    #[test]
    fn scalar_u_update() {
        let p = Problem::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 2.0)).unwrap();
        let hm = Hypermodel::coordinate(0.1, SQRT_2).unwrap();
        let th = ThetaVector::constant(1, 1.0).unwrap();
        let u = u_update(&th, &p, &hm, &SolverConfig::default()).unwrap();
        assert_relative_eq!(u[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_data_gives_zero() {
        let p = Problem::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let hm = Hypermodel::coordinate(0.1, 0.5).unwrap();
        let s = solve(&p, &hm, &SolverConfig::default()).unwrap();
        assert!(s.converged);
        assert!(s.u.iter().all(|&x| x == 0.0));
        assert!(s.theta.iter().all(|&t| (t - 0.1).abs() < 1e-15));
    }

    #[test]
    fn large_theta_approaches_least_squares() {
        let mut rng = rng_from_seed(3);
        let q = crate::rng::random_orthogonal(4, &mut rng);
        let a = q * DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 1.5, 2.0, 3.0]));
        let y = standard_normal_vector(4, &mut rng);
        let p = Problem::new(a, y).unwrap();
        let hm = Hypermodel::coordinate(0.1, 0.1).unwrap();
        let th = ThetaVector::constant(4, 1e8).unwrap();
        let u = u_update(&th, &p, &hm, &SolverConfig::default()).unwrap();
        let ls = p.a().clone().lu().solve(p.y()).unwrap();
        assert!((u - &ls).norm() <= 1e-5 * ls.norm().max(1.0));
    }

    fn residual_of(u: &DVector<f64>, th: &ThetaVector, p: &Problem, hm: &Hypermodel) -> f64 {
        let sys = NormalSystem::new(p);
        let r = &sys.gram * u + apply_weight(th, hm.structure(), u) * (hm.lambda() / SQRT_2) - &sys.rhs;
        r.norm() / sys.rhs.norm()
    }

    #[test]
    fn normal_equation_residuals_all_variants() {
        let p = random_problem(10, 6, 5);
        let mut rng = rng_from_seed(9);
        let groups = make_groups(6, &[2, 3, 1], CovKind::RandomSpd, 2).unwrap();
        let frame = make_tight_frame(6, FrameKind::RandomRows { k: 15 }, 4).unwrap();
        let models = [
            Hypermodel::coordinate(0.01, 0.3).unwrap(),
            Hypermodel::group(0.01, 0.3, groups).unwrap(),
            Hypermodel::frame(0.01, 0.3, frame).unwrap(),
        ];
        for hm in &models {
            let units = hm.units(6);
            let th = ThetaVector::new(standard_normal_vector(units, &mut rng).map(|x| 1e-3 + x.abs())).unwrap();
            for solver in [LinearSolver::Direct, LinearSolver::ConjugateGradient] {
                let cfg = SolverConfig {
                    linear_solver: solver,
                    ..SolverConfig::default()
                };
                let u = u_update(&th, &p, hm, &cfg).unwrap();
                assert!(residual_of(&u, &th, &p, hm) <= 1e-10, "{:?} {solver:?}", hm.variant());
            }
        }
    }

    #[test]
    fn solve_is_stationary_and_monotone() {
        let p = random_problem(30, 12, 11);
        let hm = Hypermodel::coordinate(0.05, 0.2).unwrap();
        let s = solve(&p, &hm, &SolverConfig::default()).unwrap();
        assert!(s.converged);
        let sys = NormalSystem::new(&p);
        assert!(sys.gradient_f(&s.u, &hm).unwrap().amax() <= 1e-8);
        assert!(s.trace.is_monotone(1e-12));
        let fm = f_map(&s.u, &hm).unwrap();
        for (a, b) in fm.iter().zip(s.theta.iter()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn mahalanobis_examples() {
        let hm = Hypermodel::coordinate(0.1, 1.0).unwrap();
        let th = ThetaVector::new(DVector::from_column_slice(&[1.0, 4.0])).unwrap();
        let v = DVector::from_column_slice(&[2.0, 2.0]);
        assert_relative_eq!(mahalanobis_norm(&v, &th, &hm).unwrap(), 5f64.sqrt(), epsilon = 1e-15);

        let w = make_tight_frame(3, FrameKind::RandomRows { k: 3 }, 1).unwrap();
        let hm = Hypermodel::frame(0.1, 1.0, w).unwrap();
        let th = ThetaVector::constant(3, 1.0).unwrap();
        let v = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        assert_relative_eq!(mahalanobis_norm(&v, &th, &hm).unwrap(), v.norm(), epsilon = 1e-14);
    }

    #[test]
    fn rate_estimate_on_small_problem() {
        let p = random_problem(8, 4, 21);
        let hm = Hypermodel::coordinate(0.1, 0.3).unwrap();
        let cfg = SolverConfig {
            record_iterates: true,
            ..SolverConfig::default()
        };
        let s = solve(&p, &hm, &cfg).unwrap();
        let est = linear_rate_estimate(&s.trace, &hm).unwrap();
        if let Some(rho) = est.rho_hat {
            assert!(rho < 0.999);
            assert!(est.tail_ratios.iter().all(|&r| r < 1.0));
        }
    }

    #[test]
    fn rate_estimate_requires_recording() {
        let p = random_problem(8, 4, 21);
        let hm = Hypermodel::coordinate(0.1, 0.3).unwrap();
        let s = solve(&p, &hm, &SolverConfig::default()).unwrap();
        assert!(linear_rate_estimate(&s.trace, &hm).is_err());
    }

    #[test]
    fn constant_sequence_has_no_ratios() {
        let hm = Hypermodel::coordinate(0.1, 0.3).unwrap();
        let u = DVector::from_column_slice(&[1.0, 2.0]);
        let trace = ConvergenceTrace {
            iterates: vec![u.clone(); 12],
            reference: Some((u.clone(), f_map(&u, &hm).unwrap())),
            ..Default::default()
        };
        let est = linear_rate_estimate(&trace, &hm).unwrap();
        assert!(est.tail_ratios.is_empty());
        assert!(est.rho_hat.is_none());
    }

    #[test]
    fn trace_csv_header() {
        let p = random_problem(6, 3, 2);
        let hm = Hypermodel::coordinate(0.1, 0.3).unwrap();
        let s = solve(&p, &hm, &SolverConfig::default()).unwrap();
        let csv = s.trace.to_csv();
        assert!(csv.starts_with("iter,J,F,step_norm,grad_inf_norm\n"));
        assert_eq!(csv.lines().count(), s.trace.len() + 1);
    }
}

//! Independent reference computations: finite differences, brute-force
//! minimization and proximal-gradient Lasso baselines.
//!
//! Nothing here calls into the solver; the oracles only evaluate
//! objectives, so they can referee the closed forms used elsewhere.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{objective_f, Hypermodel, Problem, Structure};

/// Central finite-difference gradient with step `h`.
pub fn finite_diff_grad<F>(f: F, u: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut x = u.clone();
    DVector::from_fn(u.len(), |i, _| {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x);
        x[i] = orig - h;
        let minus = f(&x);
        x[i] = orig;
        (plus - minus) / (2.0 * h)
    })
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`,
/// stopping when the bracket is narrower than `tol`.
pub fn golden_section<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Minimizer of `theta -> u^2/(2 theta) + theta - eta ln theta` over
/// `(1e-12, 10 (|u| + eta))` by golden section to `1e-8`.
pub fn golden_section_theta(u_val: f64, eta: f64) -> f64 {
    let x = u_val * u_val;
    golden_section(
        |t| x / (2.0 * t) + t - eta * t.ln(),
        1e-12,
        10.0 * (u_val.abs() + eta),
        1e-8,
    )
}

/// Points per axis on each level of the grid search.
const GRID_POINTS: usize = 41;

/// Brute-force minimizer of `F` for `d <= 2` by successive grid refinement
/// until the spacing reaches `resolution`. Each level keeps a window of
/// several cells around the best point, which is sound because `F` is
/// convex.
///
/// The default box is `[-3 ||u*||_inf - 1, 3 ||u*||_inf + 1]` per coordinate
/// (least-squares magnitude when no truth is stored).
pub fn grid_minimize_f(
    p: &Problem,
    hm: &Hypermodel,
    bounds: Option<(f64, f64)>,
    resolution: f64,
) -> Result<DVector<f64>> {
    let d = p.d();
    if d > 2 {
        return Err(Error::Unsupported(format!("grid search needs d <= 2, got d = {d}")));
    }
    if !(resolution > 0.0) {
        return Err(invalid("resolution", "must be positive"));
    }
    let (lo, hi) = match bounds {
        Some(b) => b,
        None => {
            let scale = match p.u_star() {
                Some(u) => u.amax(),
                None => p
                    .a()
                    .clone()
                    .svd(true, true)
                    .solve(p.y(), 1e-12)
                    .map_err(|e| Error::Unsupported(e.to_string()))?
                    .amax(),
            };
            (-3.0 * scale - 1.0, 3.0 * scale + 1.0)
        }
    };
    let mut lower = vec![lo; d];
    let mut upper = vec![hi; d];
    let mut best = DVector::zeros(d);
    loop {
        let steps: Vec<f64> = (0..d)
            .map(|i| (upper[i] - lower[i]) / (GRID_POINTS - 1) as f64)
            .collect();
        let mut best_val = f64::INFINITY;
        let total = GRID_POINTS.pow(d as u32);
        let mut point = DVector::zeros(d);
        for flat in 0..total {
            let mut rem = flat;
            for i in 0..d {
                point[i] = lower[i] + (rem % GRID_POINTS) as f64 * steps[i];
                rem /= GRID_POINTS;
            }
            let val = objective_f(&point, p, hm)?;
            if val < best_val {
                best_val = val;
                best.copy_from(&point);
            }
        }
        let h = steps.iter().cloned().fold(0.0, f64::max);
        if h <= resolution {
            return Ok(best);
        }
        for i in 0..d {
            let half = 5.0 * steps[i];
            lower[i] = best[i] - half;
            upper[i] = best[i] + half;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `1 / L` with `L = lambda_max(A^T A) / n`.
    Fixed,
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxConfig {
    pub step: StepRule,
    pub max_iters: usize,
    /// Bound on the gradient-mapping norm `||x - prox(x - t grad)|| / t`.
    pub tol: f64,
    pub accelerated: bool,
}

impl Default for ProxConfig {
    fn default() -> Self {
        Self {
            step: StepRule::Fixed,
            max_iters: 200_000,
            tol: 1e-12,
            accelerated: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub u: DVector<f64>,
    pub iters: usize,
    pub converged: bool,
    pub residual: f64,
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    z.signum() * (z.abs() - t).max(0.0)
}

/// Lasso `(1/2n)||y - A u||^2 + lambda ||u||_1` by (accelerated) proximal
/// gradient.
pub fn prox_l1_solve(p: &Problem, lambda: f64, cfg: &ProxConfig) -> Result<ProxResult> {
    prox_solve(p, &Structure::Coordinate, lambda, cfg)
}

/// Proximal-gradient solver for the limiting norm of `structure`: the
/// Lasso, or the group Lasso with identity block metrics. Frames are
/// refused because the analysis prox has no closed form.
pub fn prox_solve(p: &Problem, structure: &Structure, lambda: f64, cfg: &ProxConfig) -> Result<ProxResult> {
    if !(lambda >= 0.0) {
        return Err(invalid("lambda", format!("must be nonnegative, got {lambda}")));
    }
    if !(cfg.tol > 0.0) || cfg.max_iters == 0 {
        return Err(invalid("prox", "tolerance and iteration budget must be positive"));
    }
    structure.check_dim(p.d())?;
    match structure {
        Structure::Frame(_) => {
            return Err(Error::Unsupported(
                "proximal baseline for the analysis norm is not available".into(),
            ))
        }
        Structure::Group(g) if !g.all_identity() => {
            return Err(Error::Unsupported(
                "group proximal baseline requires identity block metrics".into(),
            ))
        }
        _ => {}
    }
    let n = p.n() as f64;
    let gram = p.a().tr_mul(p.a()) / n;
    let rhs = p.a().tr_mul(p.y()) / n;
    let lip = SymmetricEigen::new(gram.clone()).eigenvalues.max().max(f64::MIN_POSITIVE);
    let grad = |u: &DVector<f64>| &gram * u - &rhs;
    let smooth = |u: &DVector<f64>| 0.5 * u.dot(&(&gram * u)) - u.dot(&rhs);
    let prox = |z: &DVector<f64>, t: f64| -> DVector<f64> {
        match structure {
            Structure::Group(g) => {
                let mut out = z.clone();
                for j in 0..g.k() {
                    let zg = g.gather(j, z);
                    let norm = zg.norm();
                    let factor = if norm > 0.0 { (1.0 - t * lambda / norm).max(0.0) } else { 0.0 };
                    for &i in g.group(j) {
                        out[i] = factor * z[i];
                    }
                }
                out
            }
            _ => z.map(|x| soft_threshold(x, t * lambda)),
        }
    };

    let d = p.d();
    let mut x = DVector::zeros(d);
    let mut yv = x.clone();
    let mut momentum: f64 = 1.0;
    let mut t = 1.0 / lip;
    let mut residual = f64::INFINITY;
    for iter in 1..=cfg.max_iters {
        let g = grad(&yv);
        let mut x_new = prox(&(&yv - &g * t), t);
        if cfg.step == StepRule::Backtracking {
            let fy = smooth(&yv);
            loop {
                let diff = &x_new - &yv;
                if smooth(&x_new) <= fy + g.dot(&diff) + diff.norm_squared() / (2.0 * t) + 1e-15 * fy.abs() {
                    break;
                }
                t *= 0.5;
                x_new = prox(&(&yv - &g * t), t);
            }
        }
        residual = (&x_new - &yv).norm() / t;
        if residual <= cfg.tol {
            return Ok(ProxResult {
                u: x_new,
                iters: iter,
                converged: true,
                residual,
            });
        }
        if cfg.accelerated {
            // Restart the momentum when it points uphill.
            if (&yv - &x_new).dot(&(&x_new - &x)) > 0.0 {
                momentum = 1.0;
                yv = x_new.clone();
            } else {
                let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                yv = &x_new + (&x_new - &x) * ((momentum - 1.0) / next);
                momentum = next;
            }
        } else {
            yv = x_new.clone();
        }
        x = x_new;
    }
    Ok(ProxResult {
        u: x,
        iters: cfg.max_iters,
        converged: false,
        residual,
    })
}

/// `lambda_max(A^T A) / n`, the Lipschitz constant of the smooth part.
pub fn lipschitz_constant(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.tr_mul(a) / a.nrows() as f64).eigenvalues.max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{regularizer_eta, regularizer_grad, theta_update};
    use crate::rng::{rng_from_seed, standard_normal_matrix, standard_normal_vector};
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn finite_difference_of_quadratic() {
        let g = finite_diff_grad(|u| 0.5 * u.norm_squared(), &v(&[1.0, 2.0]), 1e-4);
        assert!((g - v(&[1.0, 2.0])).amax() < 1e-8);
    }

    #[test]
    fn finite_difference_of_regularizer() {
        let hm = Hypermodel::coordinate(0.2, 1.0).unwrap();
        let u = v(&[0.3, -1.2, 2.0, 0.0, 0.05]);
        let fd = finite_diff_grad(|x| regularizer_eta(x, &hm).unwrap(), &u, 1e-6);
        let g = regularizer_grad(&u, &hm).unwrap();
        assert!((fd - g).amax() < 1e-5);
    }

    #[test]
    fn symmetric_point_gives_antisymmetric_components() {
        let hm = Hypermodel::coordinate(0.1, 1.0).unwrap();
        let g = finite_diff_grad(|x| regularizer_eta(x, &hm).unwrap(), &v(&[0.7, -0.7]), 1e-6);
        assert!((g[0] + g[1]).abs() < 1e-8);
    }

    #[test]
    fn golden_section_matches_closed_form() {
        assert!((golden_section_theta(0.0, 0.1) - 0.1).abs() < 1e-8);
        assert!((golden_section_theta(1.0, 0.1) - 0.758872).abs() < 1e-6);
        assert_eq!(golden_section_theta(-1.0, 0.1), golden_section_theta(1.0, 0.1));
        for &(u, eta) in &[(0.3, 0.01), (5.0, 0.4), (1e-3, 1e-3)] {
            assert!((golden_section_theta(u, eta) - theta_update(u * u, eta)).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_zero_data_and_symmetry() {
        let hm = Hypermodel::coordinate(0.1, 0.5).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        let p = Problem::new(a.clone(), DVector::zeros(2)).unwrap();
        let u = grid_minimize_f(&p, &hm, Some((-1.0, 1.0)), 1e-3).unwrap();
        assert!(u.amax() < 1e-3);

        let y = v(&[1.0, -0.5]);
        let up = grid_minimize_f(&Problem::new(a.clone(), y.clone()).unwrap(), &hm, Some((-3.0, 3.0)), 1e-4).unwrap();
        let un = grid_minimize_f(&Problem::new(a, -y).unwrap(), &hm, Some((-3.0, 3.0)), 1e-4).unwrap();
        assert!((up + un).amax() < 2e-4);
    }

    #[test]
    fn grid_refuses_three_dimensions() {
        let hm = Hypermodel::coordinate(0.1, 0.5).unwrap();
        let p = Problem::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        assert!(matches!(grid_minimize_f(&p, &hm, None, 1e-3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn orthogonal_design_lasso_closed_form() {
        let n = 6;
        let a = DMatrix::identity(n, n) * (n as f64).sqrt();
        let y = v(&[3.0, -0.2, 1.0, 0.0, -4.0, 0.5]);
        let p = Problem::new(a, y.clone()).unwrap();
        let lambda = 0.3;
        let r = prox_l1_solve(&p, lambda, &ProxConfig::default()).unwrap();
        assert!(r.converged);
        let z = &y / (n as f64).sqrt();
        for i in 0..n {
            assert_relative_eq!(r.u[i], soft_threshold(z[i], lambda), epsilon = 1e-10);
        }
    }

    #[test]
    fn lasso_null_threshold() {
        let mut rng = rng_from_seed(4);
        let a = standard_normal_matrix(20, 8, &mut rng);
        let y = standard_normal_vector(20, &mut rng);
        let p = Problem::new(a.clone(), y.clone()).unwrap();
        let lam_max = (a.tr_mul(&y) / 20.0).amax();
        let r = prox_l1_solve(&p, lam_max * 1.0001, &ProxConfig::default()).unwrap();
        assert_eq!(r.u.amax(), 0.0);
    }

    #[test]
    fn backtracking_and_plain_agree() {
        let mut rng = rng_from_seed(8);
        let a = standard_normal_matrix(30, 10, &mut rng);
        let y = standard_normal_vector(30, &mut rng);
        let p = Problem::new(a, y).unwrap();
        let fast = prox_l1_solve(&p, 0.1, &ProxConfig::default()).unwrap();
        let slow = prox_l1_solve(
            &p,
            0.1,
            &ProxConfig {
                step: StepRule::Backtracking,
                accelerated: false,
                tol: 1e-10,
                ..ProxConfig::default()
            },
        )
        .unwrap();
        assert!(fast.converged && slow.converged);
        assert!((fast.u - slow.u).amax() < 1e-8);
    }

    #[test]
    fn frame_baseline_refused() {
        let w = crate::frames::make_tight_frame(3, crate::frames::FrameKind::IdentityPlusOrthobasis, 0).unwrap();
        let p = Problem::new(DMatrix::identity(3, 3), v(&[1.0, 2.0, 3.0])).unwrap();
        assert!(prox_solve(&p, &Structure::Frame(w), 0.1, &ProxConfig::default()).is_err());
    }
}

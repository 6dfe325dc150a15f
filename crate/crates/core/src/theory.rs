//! Checkable statements of the reconstruction-error theory.
//!
//! `R` below is the decomposable norm of the active model
//! ([`decomposable_norm`]) and `R*` its dual. The approximate-decomposability
//! constants are `c1 = eta/2` and `c2 = (m eta / sqrt 2)(2 - ln eta)` with `m`
//! the number of sparsity units.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::model::{
    approx_decomp_constants, decomposable_norm, decomp_constants_for, structure_norm, Hypermodel,
    Structure, Variant,
};
use crate::rng::{rng_from_seed, standard_normal_vector, Rng};

/// Relative singular-value cutoff for the frame constraint basis.
const RANK_TOL: f64 = 1e-10;

/// Model subspace `M` defined by an index set of coordinates, groups or
/// frame coefficients.
///
/// * coordinate: `M = {u : u_j = 0, j not in S}`
/// * group: `M = {u : u_g = 0, g not in S}`
/// * frame: `M = {u : (W^T u)_j = 0, j not in S}`
///
/// `M_perp` is the Euclidean orthogonal complement, so
/// `project(u, M) + project(u, M_perp) = u`.
#[derive(Debug, Clone)]
pub struct ModelSubspace {
    variant: Variant,
    d: usize,
    units: usize,
    indices: Vec<usize>,
    /// Coordinates belonging to `M` (coordinate and group models).
    mask: Vec<bool>,
    /// Orthonormal basis of `M_perp` (frame model), `d x r`.
    perp_basis: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Onto {
    M,
    MPerp,
}

impl ModelSubspace {
    /// `indices` are unit indices (coordinates, groups or frame atoms) for
    /// vectors of length `d`. Duplicates are ignored.
    pub fn new(mut indices: Vec<usize>, structure: &Structure, d: usize) -> Result<Self> {
        structure.check_dim(d)?;
        let units = structure.units(d);
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&j| j >= units) {
            return Err(invalid(
                "indices",
                format!("index {bad} out of range for {units} units"),
            ));
        }
        let mut mask = vec![false; d];
        let mut perp_basis = None;
        match structure {
            Structure::Coordinate => {
                for &j in &indices {
                    mask[j] = true;
                }
            }
            Structure::Group(g) => {
                for &j in &indices {
                    for &i in g.group(j) {
                        mask[i] = true;
                    }
                }
            }
            Structure::Frame(w) => {
                let mut inside = vec![false; units];
                for &j in &indices {
                    inside[j] = true;
                }
                let outside: Vec<usize> = (0..units).filter(|&j| !inside[j]).collect();
                perp_basis = Some(column_space_basis(&w.matrix().select_columns(&outside)));
            }
        }
        Ok(Self {
            variant: structure.variant(),
            d,
            units,
            indices,
            mask,
            perp_basis,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `|S|`, the number of selected units.
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn units(&self) -> usize {
        self.units
    }

    /// Dimension of `M`.
    pub fn dim(&self) -> usize {
        match &self.perp_basis {
            Some(q) => self.d - q.ncols(),
            None => self.mask.iter().filter(|&&b| b).count(),
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.dim() == 0
    }

    pub fn project(&self, u: &DVector<f64>, onto: Onto) -> Result<DVector<f64>> {
        check_len("u", self.d, u.len())?;
        let in_m = match &self.perp_basis {
            Some(q) => {
                if q.ncols() == 0 {
                    u.clone()
                } else {
                    u - q * q.tr_mul(u)
                }
            }
            None => DVector::from_fn(self.d, |i, _| if self.mask[i] { u[i] } else { 0.0 }),
        };
        Ok(match onto {
            Onto::M => in_m,
            Onto::MPerp => u - in_m,
        })
    }
}

/// Orthonormal basis of the column space of `b` via the SVD.
fn column_space_basis(b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = b.nrows();
    if b.ncols() == 0 {
        return DMatrix::zeros(d, 0);
    }
    let svd = b.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > RANK_TOL * smax.max(1.0))
        .map(|(i, _)| i)
        .collect();
    u.select_columns(&keep)
}

pub fn project(u: &DVector<f64>, m: &ModelSubspace, onto: Onto) -> Result<DVector<f64>> {
    m.project(u, onto)
}

/// Both sides of the cone condition
/// `R(D_perp) <= 7 R(D_M) + 8 R(u*_perp) + 4 c1 R(u*_M) + 4 c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeCheck {
    pub member: bool,
    /// `rhs - lhs`.
    pub slack: f64,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn cone_check(
    delta: &DVector<f64>,
    u_star: &DVector<f64>,
    m: &ModelSubspace,
    hm: &Hypermodel,
) -> Result<ConeCheck> {
    check_len("u_star", m.d(), u_star.len())?;
    let r = |v: &DVector<f64>| decomposable_norm(v, hm);
    let c = approx_decomp_constants(hm, m.d());
    let lhs = r(&m.project(delta, Onto::MPerp)?)?;
    let rhs = 7.0 * r(&m.project(delta, Onto::M)?)?
        + 8.0 * r(&m.project(u_star, Onto::MPerp)?)?
        + 4.0 * c.c1() * r(&m.project(u_star, Onto::M)?)?
        + 4.0 * c.c2();
    Ok(ConeCheck {
        member: lhs <= rhs,
        slack: rhs - lhs,
        lhs,
        rhs,
    })
}

/// Upper bound on `Psi(M) = sup_{u in M} R(u) / ||u||_2`.
///
/// `sqrt(|S|)` for coordinates and frame atoms, and
/// `sqrt(|S| / min_{j in S} lambda_min(C_j))` for groups (exact when every
/// selected `C_j` is the identity). Zero for an empty index set.
pub fn subspace_lipschitz(m: &ModelSubspace, hm: &Hypermodel) -> f64 {
    let s = m.size() as f64;
    if m.size() == 0 {
        return 0.0;
    }
    match hm.structure() {
        Structure::Coordinate | Structure::Frame(_) => s.sqrt(),
        Structure::Group(g) => {
            let lam_min = m
                .indices()
                .iter()
                .map(|&j| g.min_eigenvalue(j))
                .fold(f64::INFINITY, f64::min);
            (s / lam_min).sqrt()
        }
    }
}

/// Empirical restricted strong convexity constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RscEstimate {
    /// Largest `kappa` with `||A D||^2/(2n) >= kappa/2 ||D||^2 - tau^2 R(D)^2`
    /// on every sampled direction.
    pub kappa: f64,
    pub tau_sq: f64,
    pub n_samples: usize,
    /// Smallest sampled curvature `||A D||^2 / (n ||D||^2)` (tolerance-free).
    pub min_margin: f64,
}

/// Sample `n_samples` Gaussian directions plus `max(1, n_samples / 10)`
/// structured sparse directions and return the tightest RSC curvature.
pub fn rsc_estimate(
    a: &DMatrix<f64>,
    hm: &Hypermodel,
    tau_sq: f64,
    n_samples: usize,
    seed: u64,
) -> Result<RscEstimate> {
    if !(tau_sq >= 0.0) {
        return Err(invalid("tau_sq", format!("must be nonnegative, got {tau_sq}")));
    }
    if n_samples == 0 {
        return Err(invalid("n_samples", "must be at least 1"));
    }
    let d = a.ncols();
    hm.structure().check_dim(d)?;
    let gram = a.tr_mul(a) / a.nrows() as f64;
    let mut rng = rng_from_seed(seed);
    let n_sparse = (n_samples / 10).max(1);
    let mut kappa = f64::INFINITY;
    let mut min_margin = f64::INFINITY;
    for i in 0..n_samples + n_sparse {
        let dir = if i < n_samples {
            standard_normal_vector(d, &mut rng)
        } else {
            sparse_direction(hm.structure(), d, &mut rng)
        };
        let norm_sq = dir.norm_squared();
        if norm_sq == 0.0 {
            continue;
        }
        let curvature = dir.dot(&(&gram * &dir)) / norm_sq;
        let r = structure_norm(&dir, hm.structure())?;
        kappa = kappa.min(curvature + 2.0 * tau_sq * r * r / norm_sq);
        min_margin = min_margin.min(curvature);
    }
    Ok(RscEstimate {
        kappa,
        tau_sq,
        n_samples,
        min_margin,
    })
}

/// Gaussian vector supported on a random small set of units.
fn sparse_direction(structure: &Structure, d: usize, rng: &mut Rng) -> DVector<f64> {
    let units = structure.units(d);
    let max_active = ((units as f64).sqrt().ceil() as usize).clamp(1, units);
    let active = rng.random_range(1..=max_active);
    let picks = sample(rng, units, active).into_vec();
    match structure {
        Structure::Coordinate => {
            let mut v = DVector::zeros(d);
            for j in picks {
                v[j] = standard_normal_vector(1, rng)[0];
            }
            v
        }
        Structure::Group(g) => {
            let mut v = DVector::zeros(d);
            for j in picks {
                let z = standard_normal_vector(g.group(j).len(), rng);
                for (&i, x) in g.group(j).iter().zip(z.iter()) {
                    v[i] = *x;
                }
            }
            v
        }
        Structure::Frame(w) => {
            let mut c = DVector::zeros(units);
            for j in picks {
                c[j] = standard_normal_vector(1, rng)[0];
            }
            w.synthesis(&c)
        }
    }
}

/// `2 R*(A^T eps / n)`, the smallest admissible regularization weight.
pub fn lambda_threshold(a: &DMatrix<f64>, eps: &DVector<f64>, hm: &Hypermodel) -> Result<f64> {
    check_len("eps", a.nrows(), eps.len())?;
    let v = a.tr_mul(eps) / a.nrows() as f64;
    Ok(2.0 * crate::model::dual_norm(&v, hm)?)
}

/// `4 sqrt(log d / n)`.
pub fn lambda_rule_coordinate(d: usize, n: usize) -> f64 {
    4.0 * ((d as f64).ln() / n as f64).sqrt()
}

/// `2 (sqrt(p_max / n) + sqrt(log k / n))`.
pub fn lambda_rule_group(p_max: usize, k: usize, n: usize) -> f64 {
    let n = n as f64;
    2.0 * ((p_max as f64 / n).sqrt() + ((k as f64).ln() / n).sqrt())
}

/// `4 sqrt(log k / n)`.
pub fn lambda_rule_frame(k: usize, n: usize) -> f64 {
    lambda_rule_coordinate(k, n)
}

/// Explicit error radius and the hypotheses under which it is certified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRadius {
    pub delta: f64,
    pub psi: f64,
    /// `tau Psi <= sqrt(kappa) / 32` and `kappa > 0`.
    pub rsc_ok: bool,
    /// `lambda >= 2 R*(A^T eps / n)`; true when no threshold was supplied.
    pub lambda_ok: bool,
}

impl ErrorRadius {
    pub fn hypotheses_ok(&self) -> bool {
        self.rsc_ok && self.lambda_ok
    }
}

/// Radius `delta` with `||u_hat - u*||^2 <= delta` whenever the hypotheses
/// hold:
///
/// ```text
/// delta = 72 lambda^2 Psi^2 / kappa^2
///       + (8 / kappa) ( 64 tau^2 [4 R(u*_perp)^2 + c1^2 R(u*_M)^2 + c2^2]
///                       + lambda [c1 R(u*_M) + 2 R(u*_perp) + c2] )
/// ```
pub fn error_radius(
    u_star: &DVector<f64>,
    m: &ModelSubspace,
    hm: &Hypermodel,
    kappa: f64,
    tau_sq: f64,
    lambda: f64,
    lambda_threshold: Option<f64>,
) -> Result<ErrorRadius> {
    check_len("u_star", m.d(), u_star.len())?;
    if !(tau_sq >= 0.0) {
        return Err(invalid("tau_sq", format!("must be nonnegative, got {tau_sq}")));
    }
    let psi = subspace_lipschitz(m, hm);
    let c = approx_decomp_constants(hm, m.d());
    let (c1, c2) = (c.c1(), c.c2());
    let r_m = decomposable_norm(&m.project(u_star, Onto::M)?, hm)?;
    let r_perp = decomposable_norm(&m.project(u_star, Onto::MPerp)?, hm)?;
    let delta = if kappa > 0.0 {
        72.0 * lambda * lambda * psi * psi / (kappa * kappa)
            + 8.0 / kappa
                * (64.0 * tau_sq * (4.0 * r_perp * r_perp + c1 * c1 * r_m * r_m + c2 * c2)
                    + lambda * (c1 * r_m + 2.0 * r_perp + c2))
    } else {
        f64::INFINITY
    };
    let rsc_ok = kappa > 0.0 && tau_sq.sqrt() * psi <= kappa.sqrt() / 32.0;
    let lambda_ok = lambda_threshold.is_none_or(|t| lambda >= t);
    Ok(ErrorRadius {
        delta,
        psi,
        rsc_ok,
        lambda_ok,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Hard,
    Lq,
    Group,
    Frame,
}

/// Inputs of the constant-free sparsity bounds.
///
/// `units` is `d` for [`BoundKind::Hard`] and [`BoundKind::Lq`] and `k`
/// otherwise. Hard sparsity uses `s` and `head_norm`; the `lq` kinds use
/// `q`, `r_q` and the threshold `delta`. `head_norm` and `tail_norm`
/// override `R(u*_M)` and `R(u*_perp)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub kind: BoundKind,
    pub lambda: f64,
    pub kappa: f64,
    pub tau_sq: f64,
    pub eta: f64,
    pub units: usize,
    pub s: usize,
    pub q: f64,
    pub r_q: f64,
    pub delta: f64,
    pub head_norm: Option<f64>,
    pub tail_norm: Option<f64>,
}

impl BoundParams {
    pub fn hard(lambda: f64, kappa: f64, tau_sq: f64, eta: f64, d: usize, s: usize, head_norm: f64) -> Self {
        Self {
            kind: BoundKind::Hard,
            lambda,
            kappa,
            tau_sq,
            eta,
            units: d,
            s,
            q: 0.0,
            r_q: s as f64,
            delta: 0.0,
            head_norm: Some(head_norm),
            tail_norm: Some(0.0),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn lq(kind: BoundKind, lambda: f64, kappa: f64, tau_sq: f64, eta: f64, units: usize, q: f64, r_q: f64, delta: f64) -> Self {
        Self {
            kind,
            lambda,
            kappa,
            tau_sq,
            eta,
            units,
            s: 0,
            q,
            r_q,
            delta,
            head_norm: None,
            tail_norm: None,
        }
    }
}

/// Estimation, approximation and `E_eta` parts of a bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub estimation: f64,
    pub approximation: f64,
    pub e_eta: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.estimation + self.approximation + self.e_eta
    }
}

/// Right-hand side of the sparsity bounds without the hidden constant:
///
/// ```text
/// est = (lambda^2 / kappa^2) Psi^2
/// app = (tau^2 / kappa) T + (lambda / kappa) T
/// E   = (tau^2 / kappa)(c1^2 H^2 + c2^2) + (lambda / kappa)(c1 H + c2)
/// ```
///
/// with `Psi^2 = s`, `T = 0`, `H = ||u*_S||_1` for hard sparsity and
/// `Psi^2 = R_q delta^-q`, `T = R_q delta^(1-q)`, `H = R_q^(1/q)` otherwise.
pub fn theorem4_rhs(p: &BoundParams) -> Result<BoundTerms> {
    if !(p.kappa > 0.0) {
        return Err(invalid("kappa", format!("must be positive, got {}", p.kappa)));
    }
    if !(p.eta > 0.0 && p.eta < 0.5) {
        return Err(invalid("eta", format!("must lie in (0, 1/2), got {}", p.eta)));
    }
    let (psi_sq, tail, head) = match p.kind {
        BoundKind::Hard => (
            p.s as f64,
            p.tail_norm.unwrap_or(0.0),
            p.head_norm
                .ok_or_else(|| invalid("head_norm", "required for hard sparsity"))?,
        ),
        BoundKind::Lq | BoundKind::Group | BoundKind::Frame => {
            if !(p.q > 0.0 && p.q < 1.0) {
                return Err(invalid("q", format!("must lie in (0, 1), got {}", p.q)));
            }
            if !(p.r_q > 0.0 && p.delta > 0.0) {
                return Err(invalid("r_q", "R_q and delta must be positive"));
            }
            (
                p.r_q * p.delta.powf(-p.q),
                p.tail_norm.unwrap_or(p.r_q * p.delta.powf(1.0 - p.q)),
                p.head_norm.unwrap_or(p.r_q.powf(1.0 / p.q)),
            )
        }
    };
    let c = decomp_constants_for(p.eta, p.units);
    let (c1, c2) = (c.c1(), c.c2());
    let (l, k, t) = (p.lambda, p.kappa, p.tau_sq);
    Ok(BoundTerms {
        estimation: l * l / (k * k) * psi_sq,
        approximation: t / k * tail + l / k * tail,
        e_eta: t / k * (c1 * c1 * head * head + c2 * c2) + l / k * (c1 * head + c2),
    })
}

/// `sqrt(log d / n) (eta H + (d eta / sqrt 2)(2 - ln eta))`, the `eta`-term
/// of the Gaussian-design coordinate bounds (`H = ||u*_S||_1` or `R_q^(1/q)`).
pub fn phi_coordinate(d: usize, n: usize, eta: f64, head: f64) -> f64 {
    ((d as f64).ln() / n as f64).sqrt()
        * (eta * head + d as f64 * eta / std::f64::consts::SQRT_2 * (2.0 - eta.ln()))
}

/// `sqrt((p_max + log k) / n) (eta H + k eta (2 - ln eta))`.
pub fn phi_group(p_max: usize, k: usize, n: usize, eta: f64, head: f64) -> f64 {
    ((p_max as f64 + (k as f64).ln()) / n as f64).sqrt() * (eta * head + k as f64 * eta * (2.0 - eta.ln()))
}

/// `sqrt(log k / n) (eta H + k eta (2 - ln eta))`.
pub fn phi_frame(k: usize, n: usize, eta: f64, head: f64) -> f64 {
    ((k as f64).ln() / n as f64).sqrt() * (eta * head + k as f64 * eta * (2.0 - eta.ln()))
}

/// Sparsity class for the leading rate of the Gaussian-design bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum RateClass {
    Hard { s: usize },
    Lq { q: f64, r_q: f64 },
}

/// Leading rate without constants: `s r` or `R_q r^(1 - q/2)` with
/// `r = log d / n` (coordinate), `(p_max + log k)/n` (group) or
/// `log k / n` (frame).
pub fn corollary_rate(variant: Variant, class: RateClass, n: usize, units: usize, p_max: usize) -> f64 {
    let n = n as f64;
    let r = match variant {
        Variant::Coordinate | Variant::Frame => (units as f64).ln() / n,
        Variant::Group => (p_max as f64 + (units as f64).ln()) / n,
    };
    match class {
        RateClass::Hard { s } => s as f64 * r,
        RateClass::Lq { q, r_q } => r_q * r.powf(1.0 - q / 2.0),
    }
}

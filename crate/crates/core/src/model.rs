//! Hierarchical models, their objectives and effective regularizers.
//!
//! All three models share one penalty. With `x_j` the squared magnitude of
//! the `j`-th sparsity unit (`u_j^2`, `||u_{g_j}||_{C_j}^2` or
//! `(W^T u)_j^2`), the negative log-posterior is
//!
//! ```text
//! J(u, theta) = ||y - A u||^2 / (2n)
//!             + (lambda / sqrt 2) * sum_j [ x_j / (2 theta_j) + theta_j - eta ln theta_j ]
//! ```
//!
//! Minimizing over `theta_j` gives `f(x_j) = eta/2 + sqrt(eta^2/4 + x_j/2)` and
//! the partially minimized penalty is `lambda * R_eta(u)`.
//!
//! Group norms follow `||x||_C = sqrt(x^T C^{-1} x)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, invalid, Error, Result};
use crate::frames::{GroupStructure, TightFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Coordinate,
    Group,
    Frame,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Coordinate => "coordinate",
            Variant::Group => "group",
            Variant::Frame => "frame",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coordinate" | "ias" => Ok(Variant::Coordinate),
            "group" | "gs-ias" => Ok(Variant::Group),
            "frame" | "o-ias" => Ok(Variant::Frame),
            other => Err(invalid(
                "variant",
                format!("unknown variant `{other}` (expected coordinate, group or frame)"),
            )),
        }
    }
}

/// Sparsity structure of a hypermodel.
#[derive(Debug, Clone)]
pub enum Structure {
    Coordinate,
    Group(GroupStructure),
    Frame(TightFrame),
}

impl Structure {
    pub fn variant(&self) -> Variant {
        match self {
            Structure::Coordinate => Variant::Coordinate,
            Structure::Group(_) => Variant::Group,
            Structure::Frame(_) => Variant::Frame,
        }
    }

    /// Dimension of `u` implied by the structure, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Structure::Coordinate => None,
            Structure::Group(g) => Some(g.d()),
            Structure::Frame(w) => Some(w.d()),
        }
    }

    /// Number of sparsity units (length of `theta`) for `u` of length `d`.
    pub fn units(&self, d: usize) -> usize {
        match self {
            Structure::Coordinate => d,
            Structure::Group(g) => g.k(),
            Structure::Frame(w) => w.k(),
        }
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        match self.dim() {
            Some(d) => check_len("u", d, len),
            None => Ok(()),
        }
    }

    /// Squared magnitude of every sparsity unit of `u`.
    pub fn magnitudes_sq(&self, u: &DVector<f64>) -> Result<Vec<f64>> {
        self.check_dim(u.len())?;
        Ok(match self {
            Structure::Coordinate => u.iter().map(|x| x * x).collect(),
            Structure::Group(g) => (0..g.k()).map(|j| g.c_norm_sq(j, &g.gather(j, u))).collect(),
            Structure::Frame(w) => w.analysis(u).iter().map(|x| x * x).collect(),
        })
    }
}

/// One of the three hierarchical models with its hyperparameters.
#[derive(Debug, Clone)]
pub struct Hypermodel {
    eta: f64,
    lambda: f64,
    structure: Structure,
}

impl Hypermodel {
    /// Requires `0 < eta < 1/2` and `lambda > 0`.
    pub fn new(eta: f64, lambda: f64, structure: Structure) -> Result<Self> {
        if !(eta > 0.0 && eta < 0.5) {
            return Err(invalid("eta", format!("must lie in (0, 1/2), got {eta}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        Ok(Self {
            eta,
            lambda,
            structure,
        })
    }

    pub fn coordinate(eta: f64, lambda: f64) -> Result<Self> {
        Self::new(eta, lambda, Structure::Coordinate)
    }

    pub fn group(eta: f64, lambda: f64, groups: GroupStructure) -> Result<Self> {
        Self::new(eta, lambda, Structure::Group(groups))
    }

    pub fn frame(eta: f64, lambda: f64, frame: TightFrame) -> Result<Self> {
        Self::new(eta, lambda, Structure::Frame(frame))
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.eta, lambda, self.structure.clone())
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(eta, self.lambda, self.structure.clone())
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn variant(&self) -> Variant {
        self.structure.variant()
    }

    pub fn units(&self, d: usize) -> usize {
        self.structure.units(d)
    }
}

/// Positive auxiliary variances, one per sparsity unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector(DVector<f64>);

impl ThetaVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonPositiveTheta { index, value });
        }
        Ok(Self(values))
    }

    pub fn constant(len: usize, value: f64) -> Result<Self> {
        Self::new(DVector::from_element(len, value))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }
}

impl std::ops::Index<usize> for ThetaVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Closed-form minimizer of `theta -> x/(2 theta) + theta - eta ln theta`.
///
/// `x` is a squared magnitude. The square root is evaluated as a hypotenuse
/// so tiny `eta` does not lose precision.
#[inline]
pub fn theta_update(x_sq: f64, eta: f64) -> f64 {
    let half_eta = 0.5 * eta;
    half_eta + half_eta.hypot((0.5 * x_sq).sqrt())
}

/// Bracket of the `theta`-penalty at its minimizer `f >= eta`.
#[inline]
fn penalty_at(x_sq: f64, f: f64, eta: f64) -> f64 {
    x_sq / (2.0 * f) + f - eta * f.max(eta).ln()
}

pub fn f_map(u: &DVector<f64>, hm: &Hypermodel) -> Result<ThetaVector> {
    let mags = hm.structure.magnitudes_sq(u)?;
    Ok(ThetaVector(DVector::from_iterator(
        mags.len(),
        mags.into_iter().map(|x| theta_update(x, hm.eta)),
    )))
}

pub fn regularizer_eta(u: &DVector<f64>, hm: &Hypermodel) -> Result<f64> {
    let eta = hm.eta;
    let mags = hm.structure.magnitudes_sq(u)?;
    let sum: f64 = mags
        .into_iter()
        .map(|x| penalty_at(x, theta_update(x, eta), eta))
        .sum();
    Ok(sum / SQRT_2)
}

/// Gradient of `R_eta` (envelope theorem: `theta` held at `f(u)`).
pub fn regularizer_grad(u: &DVector<f64>, hm: &Hypermodel) -> Result<DVector<f64>> {
    let eta = hm.eta;
    hm.structure.check_dim(u.len())?;
    Ok(match &hm.structure {
        Structure::Coordinate => u.map(|x| x / (SQRT_2 * theta_update(x * x, eta))),
        Structure::Group(g) => {
            let mut out = DVector::zeros(u.len());
            for j in 0..g.k() {
                let ug = g.gather(j, u);
                let f = theta_update(g.c_norm_sq(j, &ug), eta);
                let block = if g.is_identity(j) {
                    ug
                } else {
                    g.cov_inv(j) * &ug
                };
                for (&i, v) in g.group(j).iter().zip(block.iter()) {
                    out[i] = v / (SQRT_2 * f);
                }
            }
            out
        }
        Structure::Frame(w) => {
            let c = w.analysis(u);
            let scaled = c.map(|x| x / (SQRT_2 * theta_update(x * x, eta)));
            w.synthesis(&scaled)
        }
    })
}

/// The decomposable norm approached by `R_eta` as `eta -> 0`:
/// `||u||_1`, `sum_j ||u_{g_j}||_{C_j}` or `||W^T u||_1`.
pub fn decomposable_norm(u: &DVector<f64>, hm: &Hypermodel) -> Result<f64> {
    structure_norm(u, &hm.structure)
}

pub fn structure_norm(u: &DVector<f64>, structure: &Structure) -> Result<f64> {
    structure.check_dim(u.len())?;
    Ok(match structure {
        Structure::Coordinate => u.lp_norm(1),
        Structure::Group(g) => (0..g.k()).map(|j| g.c_norm_sq(j, &g.gather(j, u)).sqrt()).sum(),
        Structure::Frame(w) => w.analysis(u).lp_norm(1),
    })
}

/// Dual of [`decomposable_norm`]: `||v||_inf`, `max_j ||v_{g_j}||_{C_j^{-1}}`
/// or `||W^T v||_inf`.
pub fn dual_norm(v: &DVector<f64>, hm: &Hypermodel) -> Result<f64> {
    structure_dual_norm(v, &hm.structure)
}

pub fn structure_dual_norm(v: &DVector<f64>, structure: &Structure) -> Result<f64> {
    structure.check_dim(v.len())?;
    Ok(match structure {
        Structure::Coordinate => v.amax(),
        Structure::Group(g) => (0..g.k())
            .map(|j| g.dual_c_norm(j, &g.gather(j, v)))
            .fold(0.0, f64::max),
        Structure::Frame(w) => w.analysis(v).amax(),
    })
}

/// Which normalization conventions a forward map satisfies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationFlags {
    /// `||A_j||_2 / sqrt(n) = 1` for every column.
    pub column: bool,
    /// `||A_{g_j} L_j||_op / sqrt(n) = 1` for every group (`C_j = L_j L_j^T`).
    pub block: bool,
    /// `||(A W)_j||_2 / sqrt(n) = 1` for every frame atom.
    pub frame: bool,
}

/// Relative tolerance for the normalization flags.
pub const NORMALIZATION_TOL: f64 = 1e-8;

impl NormalizationFlags {
    pub fn detect(a: &DMatrix<f64>, structure: &Structure) -> Self {
        let sqrt_n = (a.nrows() as f64).sqrt();
        let near_one = |x: f64| (x / sqrt_n - 1.0).abs() <= NORMALIZATION_TOL;
        let column = a.column_iter().all(|c| near_one(c.norm()));
        let block = match structure {
            Structure::Group(g) if g.d() == a.ncols() => {
                (0..g.k()).all(|j| near_one(block_op_norm(a, g, j)))
            }
            Structure::Coordinate => column,
            _ => false,
        };
        let frame = match structure {
            Structure::Frame(w) if w.d() == a.ncols() => {
                (a * w.matrix()).column_iter().all(|c| near_one(c.norm()))
            }
            _ => false,
        };
        Self {
            column,
            block,
            frame,
        }
    }
}

/// `max_{||v||_{C_j} = 1} ||A_{g_j} v||_2`, i.e. the spectral norm of `A_{g_j} L_j`.
pub fn block_op_norm(a: &DMatrix<f64>, g: &GroupStructure, j: usize) -> f64 {
    let idx = g.group(j);
    let sub = a.select_columns(idx);
    let m = if g.is_identity(j) {
        sub
    } else {
        sub * g.cov_cholesky(j)
    };
    if m.ncols() == 1 {
        return m.norm();
    }
    m.singular_values().max()
}

/// Linear inverse problem `y = A u + eps`.
#[derive(Debug, Clone)]
pub struct Problem {
    a: DMatrix<f64>,
    y: DVector<f64>,
    u_star: Option<DVector<f64>>,
    eps: Option<DVector<f64>>,
    /// Column scaling applied by normalization: `A' = A diag(scaling)`.
    scaling: Option<DVector<f64>>,
    flags: NormalizationFlags,
}

impl Problem {
    pub fn new(a: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(invalid("A", "forward map must be non-empty"));
        }
        check_len("y", a.nrows(), y.len())?;
        let flags = NormalizationFlags::detect(&a, &Structure::Coordinate);
        Ok(Self {
            a,
            y,
            u_star: None,
            eps: None,
            scaling: None,
            flags,
        })
    }

    /// Synthetic problem with `y = A u_star + eps`.
    pub fn with_truth(a: DMatrix<f64>, u_star: DVector<f64>, eps: DVector<f64>) -> Result<Self> {
        check_len("u_star", a.ncols(), u_star.len())?;
        check_len("eps", a.nrows(), eps.len())?;
        let y = &a * &u_star + &eps;
        let mut p = Self::new(a, y)?;
        p.u_star = Some(u_star);
        p.eps = Some(eps);
        Ok(p)
    }

    pub(crate) fn from_parts(
        a: DMatrix<f64>,
        y: DVector<f64>,
        u_star: Option<DVector<f64>>,
        eps: Option<DVector<f64>>,
        scaling: Option<DVector<f64>>,
        flags: NormalizationFlags,
    ) -> Self {
        Self {
            a,
            y,
            u_star,
            eps,
            scaling,
            flags,
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn u_star(&self) -> Option<&DVector<f64>> {
        self.u_star.as_ref()
    }

    pub fn eps(&self) -> Option<&DVector<f64>> {
        self.eps.as_ref()
    }

    pub fn scaling(&self) -> Option<&DVector<f64>> {
        self.scaling.as_ref()
    }

    pub fn flags(&self) -> NormalizationFlags {
        self.flags
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    pub fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("u", self.d(), u.len())?;
        Ok(&self.y - &self.a * u)
    }

    /// `||y - A u||^2 / (2n)`.
    pub fn data_misfit(&self, u: &DVector<f64>) -> Result<f64> {
        Ok(self.residual(u)?.norm_squared() / (2.0 * self.n() as f64))
    }
}

fn check_problem(p: &Problem, hm: &Hypermodel) -> Result<()> {
    hm.structure.check_dim(p.d())
}

pub fn objective_j(u: &DVector<f64>, theta: &ThetaVector, p: &Problem, hm: &Hypermodel) -> Result<f64> {
    check_problem(p, hm)?;
    check_len("u", p.d(), u.len())?;
    let mags = hm.structure.magnitudes_sq(u)?;
    check_len("theta", mags.len(), theta.len())?;
    let eta = hm.eta;
    let mut penalty = 0.0;
    for (i, (x, &t)) in mags.iter().zip(theta.iter()).enumerate() {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTheta { index: i, value: t });
        }
        penalty += x / (2.0 * t) + t - eta * t.ln();
    }
    Ok(p.data_misfit(u)? + hm.lambda / SQRT_2 * penalty)
}

pub fn objective_f(u: &DVector<f64>, p: &Problem, hm: &Hypermodel) -> Result<f64> {
    check_problem(p, hm)?;
    Ok(p.data_misfit(u)? + hm.lambda * regularizer_eta(u, hm)?)
}

/// `(lower, upper)` with `lower <= R_eta(u) <= upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichBounds {
    pub lower: f64,
    pub upper: f64,
}

impl SandwichBounds {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

pub fn sandwich_bounds(u: &DVector<f64>, hm: &Hypermodel) -> Result<SandwichBounds> {
    let r = decomposable_norm(u, hm)?;
    let c = approx_decomp_constants(hm, u.len());
    Ok(SandwichBounds {
        lower: (1.0 - c.c1_lower) * r - c.c2_lower,
        upper: (1.0 + c.c1_upper) * r + c.c2_upper,
    })
}

/// Constants of the two-sided bound
/// `(1 - c1L) R(u) - c2L <= R_eta(u) <= (1 + c1U) R(u) + c2U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompConstants {
    pub c1_lower: f64,
    pub c1_upper: f64,
    pub c2_lower: f64,
    pub c2_upper: f64,
}

impl DecompConstants {
    pub fn c1(&self) -> f64 {
        self.c1_lower + self.c1_upper
    }

    /// `(m eta / sqrt 2)(2 - ln eta)`.
    pub fn c2(&self) -> f64 {
        self.c2_lower + self.c2_upper
    }
}

/// `d` is the length of `u`; the constants scale with the number of units.
pub fn approx_decomp_constants(hm: &Hypermodel, d: usize) -> DecompConstants {
    decomp_constants_for(hm.eta, hm.units(d))
}

pub fn decomp_constants_for(eta: f64, units: usize) -> DecompConstants {
    let m = units as f64;
    DecompConstants {
        c1_lower: 0.5 * eta,
        c1_upper: 0.0,
        c2_lower: m * eta / SQRT_2,
        c2_upper: m * eta / SQRT_2 * (1.0 - eta.ln()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{make_groups, make_tight_frame, CovKind, FrameKind};
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn f_map_examples() {
        let hm = Hypermodel::coordinate(0.1, 1.0).unwrap();
        let th = f_map(&v(&[0.0, 1.0]), &hm).unwrap();
        assert_relative_eq!(th[0], 0.1, epsilon = 1e-15);
        // Golden-section value of the 1-D minimization (independent check).
        assert_relative_eq!(th[1], 0.758872344, epsilon = 1e-8);

        let g = make_groups(4, &[2, 2], CovKind::Identity, 0).unwrap();
        let hm = Hypermodel::group(0.1, 1.0, g).unwrap();
        let th = f_map(&v(&[0.0, 0.0, 3.0, 4.0]), &hm).unwrap();
        assert_relative_eq!(th[0], 0.1, epsilon = 1e-15);
        assert_relative_eq!(th[1], theta_update(25.0, 0.1), epsilon = 1e-15);
    }

    #[test]
    fn regularizer_values() {
        let hm = Hypermodel::coordinate(0.1, 1.0).unwrap();
        let zero = regularizer_eta(&v(&[0.0, 0.0]), &hm).unwrap();
        let expect = 2.0 * 0.1 * (1.0 - 0.1f64.ln()) / SQRT_2;
        assert_relative_eq!(zero, expect, epsilon = 1e-15);
        assert_relative_eq!(zero, 0.467056062940339, epsilon = 1e-12);
        let e1 = regularizer_eta(&v(&[1.0, 0.0]), &hm).unwrap();
        assert_relative_eq!(e1, 1.255535525164528, epsilon = 1e-12);
    }

    #[test]
    fn gradient_at_unit_vector() {
        let hm = Hypermodel::coordinate(0.1, 1.0).unwrap();
        let g = regularizer_grad(&v(&[1.0, 0.0]), &hm).unwrap();
        assert_relative_eq!(g[0], 0.9317862046695162, epsilon = 1e-12);
        assert_eq!(g[1], 0.0);
        let g0 = regularizer_grad(&v(&[0.0, 0.0, 0.0]), &hm).unwrap();
        assert!(g0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn norms_and_duals() {
        let hm = Hypermodel::coordinate(0.1, 1.0).unwrap();
        assert_eq!(decomposable_norm(&v(&[3.0, -4.0, 1.0]), &hm).unwrap(), 8.0);
        assert_eq!(dual_norm(&v(&[3.0, -4.0, 1.0]), &hm).unwrap(), 4.0);

        let g = make_groups(4, &[2, 2], CovKind::Identity, 0).unwrap();
        let hm = Hypermodel::group(0.1, 1.0, g).unwrap();
        assert_relative_eq!(decomposable_norm(&v(&[3.0, 4.0, 0.0, 0.0]), &hm).unwrap(), 5.0);

        let w = TightFrame::new(DMatrix::identity(2, 2), crate::frames::FrameKind::Custom).unwrap();
        let hm = Hypermodel::frame(0.1, 1.0, w).unwrap();
        assert_relative_eq!(decomposable_norm(&v(&[1.0, -1.0]), &hm).unwrap(), 2.0);
    }

    #[test]
    fn group_dual_with_scaled_identity() {
        let g = GroupStructure::new(vec![vec![0, 1]], vec![DMatrix::identity(2, 2) * 4.0]).unwrap();
        let hm = Hypermodel::group(0.1, 1.0, g).unwrap();
        let vv = v(&[2.0, 0.0]);
        // Dual of sqrt(x^T C^-1 x) is sqrt(x^T C x).
        assert_relative_eq!(dual_norm(&vv, &hm).unwrap(), 4.0, epsilon = 1e-15);
        // The pair (u, v) attains Hoelder's inequality.
        let u = v(&[1.0, 0.0]);
        let lhs = u.dot(&vv);
        let rhs = decomposable_norm(&u, &hm).unwrap() * dual_norm(&vv, &hm).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-15);
    }

    #[test]
    fn objective_j_example() {
        let p = Problem::new(DMatrix::from_element(1, 1, 1.0), v(&[0.0])).unwrap();
        let hm = Hypermodel::coordinate(0.1, SQRT_2).unwrap();
        let th = ThetaVector::constant(1, 1.0).unwrap();
        assert_relative_eq!(objective_j(&v(&[0.0]), &th, &p, &hm).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn objective_j_rejects_bad_theta() {
        assert!(ThetaVector::new(v(&[1.0, 0.0])).is_err());
        assert!(ThetaVector::new(v(&[1.0, f64::NAN])).is_err());
    }

    #[test]
    fn f_at_zero_closed_form() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let p = Problem::new(a, v(&[1.0, -2.0])).unwrap();
        let hm = Hypermodel::coordinate(0.1, 0.7).unwrap();
        let f0 = objective_f(&v(&[0.0, 0.0]), &p, &hm).unwrap();
        let expect = 5.0 / 4.0 + 0.7 * 2.0 * 0.1 * (1.0 - 0.1f64.ln()) / SQRT_2;
        assert_relative_eq!(f0, expect, epsilon = 1e-14);
    }

    #[test]
    fn sandwich_examples() {
        let hm = Hypermodel::coordinate(0.1, 1.0).unwrap();
        let b = sandwich_bounds(&v(&[0.0, 0.0]), &hm).unwrap();
        assert_relative_eq!(b.upper, 0.467056062940339, epsilon = 1e-12);
        assert_relative_eq!(regularizer_eta(&v(&[0.0, 0.0]), &hm).unwrap(), b.upper, epsilon = 1e-15);
        let b = sandwich_bounds(&v(&[1.0, 0.0]), &hm).unwrap();
        assert_relative_eq!(b.lower, 0.8085786437626905, epsilon = 1e-12);
        assert_relative_eq!(b.upper, 1.4670560629403389, epsilon = 1e-12);
        assert!(b.contains(1.255535525164528));
    }

    #[test]
    fn decomposition_constants() {
        let hm = Hypermodel::coordinate(0.1, 1.0).unwrap();
        let c = approx_decomp_constants(&hm, 10);
        assert_eq!(c.c1(), 0.05);
        assert_relative_eq!(c.c2(), 3.042387095888241, epsilon = 1e-12);
        let tiny = decomp_constants_for(1e-12, 10);
        assert!(tiny.c1() < 1e-12 && tiny.c2() < 1e-9);
    }

    #[test]
    fn eta_outside_open_half_interval_is_rejected() {
        assert!(Hypermodel::coordinate(0.5, 1.0).is_err());
        assert!(Hypermodel::coordinate(0.0, 1.0).is_err());
        assert!(Hypermodel::coordinate(0.1, 0.0).is_err());
        assert!(Hypermodel::coordinate(0.49, 1.0).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        let f = make_tight_frame(3, FrameKind::IdentityPlusOrthobasis, 0).unwrap();
        let hm = Hypermodel::frame(0.1, 1.0, f).unwrap();
        assert!(matches!(
            regularizer_eta(&v(&[1.0, 2.0]), &hm),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn normalization_flags() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let flags = NormalizationFlags::detect(&a, &Structure::Coordinate);
        assert!(flags.column && flags.block);
        let p = Problem::new(a * 2.0, v(&[0.0, 0.0])).unwrap();
        assert!(!p.flags().column);
    }
}

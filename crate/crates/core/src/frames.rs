//! Tight frames and group structures for the frame and group models.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{random_orthogonal, rng_from_seed, standard_normal_matrix};

/// Maximum Frobenius defect `||W W^T - I||_F` accepted for a tight frame.
pub const TIGHTNESS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FrameKind {
    /// `W = [I | Q] / sqrt(2)` with `Q` a random rotation; `k = 2d`.
    IdentityPlusOrthobasis,
    /// `k x d` Gaussian matrix with orthonormalized columns, transposed.
    RandomRows { k: usize },
    /// Caller-supplied matrix.
    Custom,
}

/// Dictionary `W` (d x k, k >= d) with `W W^T = I`.
#[derive(Debug, Clone)]
pub struct TightFrame {
    w: DMatrix<f64>,
    kind: FrameKind,
}

impl TightFrame {
    pub fn new(w: DMatrix<f64>, kind: FrameKind) -> Result<Self> {
        if w.ncols() < w.nrows() {
            return Err(invalid(
                "frame",
                format!("k = {} is smaller than d = {}", w.ncols(), w.nrows()),
            ));
        }
        let defect = tightness_defect(&w);
        if !(defect <= TIGHTNESS_TOL) {
            return Err(invalid(
                "frame",
                format!("||W W^T - I||_F = {defect:e} exceeds {TIGHTNESS_TOL:e}"),
            ));
        }
        Ok(Self { w, kind })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn kind(&self) -> FrameKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    /// Frame coefficients `W^T u`.
    pub fn analysis(&self, u: &DVector<f64>) -> DVector<f64> {
        self.w.tr_mul(u)
    }

    /// `W c`.
    pub fn synthesis(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.w * c
    }

    pub fn tightness_defect(&self) -> f64 {
        tightness_defect(&self.w)
    }

    /// `||(W^T W)^2 - W^T W||_F`; zero when `W^T W` is an orthogonal projector.
    pub fn projector_defect(&self) -> f64 {
        let p = self.w.tr_mul(&self.w);
        (&p * &p - &p).norm()
    }
}

fn tightness_defect(w: &DMatrix<f64>) -> f64 {
    let d = w.nrows();
    (w * w.transpose() - DMatrix::identity(d, d)).norm()
}

/// Builds a tight frame of the requested kind, deterministic in `seed`.
pub fn make_tight_frame(d: usize, kind: FrameKind, seed: u64) -> Result<TightFrame> {
    if d < 2 {
        return Err(invalid("d", format!("frames need d >= 2, got {d}")));
    }
    let mut rng = rng_from_seed(seed);
    let w = match kind {
        FrameKind::IdentityPlusOrthobasis => {
            let q = random_orthogonal(d, &mut rng);
            let mut w = DMatrix::zeros(d, 2 * d);
            let s = std::f64::consts::FRAC_1_SQRT_2;
            for i in 0..d {
                w[(i, i)] = s;
            }
            w.view_mut((0, d), (d, d)).copy_from(&(q * s));
            w
        }
        FrameKind::RandomRows { k } => {
            if k < d {
                return Err(invalid("k", format!("need k >= d, got k = {k}, d = {d}")));
            }
            // Columns of Q (k x d) are orthonormal, so W = Q^T has orthonormal rows.
            let g = standard_normal_matrix(k, d, &mut rng);
            let q = g.qr().q();
            q.transpose()
        }
        FrameKind::Custom => {
            return Err(Error::Unsupported(
                "custom frames are built with TightFrame::new".into(),
            ))
        }
    };
    TightFrame::new(w, kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovKind {
    Identity,
    /// `C = Q diag(s) Q^T` with a log-uniform spectrum in `[10^-1/2, 10^1/2]`.
    RandomSpd,
}

/// Partition of `{0..d}` into groups with one SPD matrix per group.
#[derive(Debug, Clone)]
pub struct GroupStructure {
    d: usize,
    groups: Vec<Vec<usize>>,
    covs: Vec<DMatrix<f64>>,
    cov_invs: Vec<DMatrix<f64>>,
    // Lower Cholesky factors of the covariances.
    chol: Vec<DMatrix<f64>>,
    identity: Vec<bool>,
}

impl GroupStructure {
    pub fn new(groups: Vec<Vec<usize>>, covs: Vec<DMatrix<f64>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(invalid("groups", "at least one group is required"));
        }
        if groups.len() != covs.len() {
            return Err(Error::DimensionMismatch {
                what: "group covariance list",
                expected: groups.len(),
                got: covs.len(),
            });
        }
        let d: usize = groups.iter().map(Vec::len).sum();
        let mut seen = vec![false; d];
        for (j, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(invalid("groups", format!("group {j} is empty")));
            }
            for &i in g {
                if i >= d || seen[i] {
                    return Err(invalid(
                        "groups",
                        format!("groups must be disjoint and cover 0..{d}; index {i} is repeated or out of range"),
                    ));
                }
                seen[i] = true;
            }
        }
        let mut cov_invs = Vec::with_capacity(covs.len());
        let mut chol = Vec::with_capacity(covs.len());
        let mut identity = Vec::with_capacity(covs.len());
        for (j, (g, c)) in groups.iter().zip(&covs).enumerate() {
            let p = g.len();
            if c.nrows() != p || c.ncols() != p {
                return Err(Error::DimensionMismatch {
                    what: "group covariance",
                    expected: p,
                    got: c.nrows(),
                });
            }
            if (c - c.transpose()).norm() > 1e-12 * c.norm().max(1.0) {
                return Err(invalid("groups", format!("C_{j} is not symmetric")));
            }
            let ch = Cholesky::new(c.clone())
                .ok_or_else(|| invalid("groups", format!("C_{j} is not positive definite")))?;
            cov_invs.push(ch.inverse());
            chol.push(ch.l());
            identity.push(*c == DMatrix::identity(p, p));
        }
        Ok(Self {
            d,
            groups,
            covs,
            cov_invs,
            chol,
            identity,
        })
    }

    /// Identity covariances on the given groups.
    pub fn with_identity(groups: Vec<Vec<usize>>) -> Result<Self> {
        let covs = groups
            .iter()
            .map(|g| DMatrix::identity(g.len(), g.len()))
            .collect();
        Self::new(groups, covs)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of groups.
    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn p_max(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }

    pub fn cov(&self, j: usize) -> &DMatrix<f64> {
        &self.covs[j]
    }

    pub fn cov_inv(&self, j: usize) -> &DMatrix<f64> {
        &self.cov_invs[j]
    }

    /// Lower Cholesky factor `L` with `C_j = L L^T`.
    pub fn cov_cholesky(&self, j: usize) -> &DMatrix<f64> {
        &self.chol[j]
    }

    pub fn is_identity(&self, j: usize) -> bool {
        self.identity[j]
    }

    pub fn all_identity(&self) -> bool {
        self.identity.iter().all(|&b| b)
    }

    pub fn gather(&self, j: usize, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.groups[j].len(), self.groups[j].iter().map(|&i| u[i]))
    }

    /// `||x||_{C_j}^2 = x^T C_j^{-1} x`.
    pub fn c_norm_sq(&self, j: usize, x: &DVector<f64>) -> f64 {
        if self.identity[j] {
            x.norm_squared()
        } else {
            x.dot(&(&self.cov_invs[j] * x))
        }
    }

    /// Dual block norm `||x||_{C_j^{-1}} = sqrt(x^T C_j x)`.
    pub fn dual_c_norm(&self, j: usize, x: &DVector<f64>) -> f64 {
        if self.identity[j] {
            x.norm()
        } else {
            x.dot(&(&self.covs[j] * x)).max(0.0).sqrt()
        }
    }

    pub fn min_eigenvalue(&self, j: usize) -> f64 {
        if self.identity[j] {
            return 1.0;
        }
        SymmetricEigen::new(self.covs[j].clone()).eigenvalues.min()
    }

    pub fn condition_number(&self, j: usize) -> f64 {
        let e = SymmetricEigen::new(self.covs[j].clone()).eigenvalues;
        e.max() / e.min()
    }

    /// Group index of every coordinate.
    pub fn membership(&self) -> Vec<usize> {
        let mut m = vec![0; self.d];
        for (j, g) in self.groups.iter().enumerate() {
            for &i in g {
                m[i] = j;
            }
        }
        m
    }
}

/// Contiguous groups of the given sizes with identity or random SPD blocks.
pub fn make_groups(d: usize, sizes: &[usize], cov_kind: CovKind, seed: u64) -> Result<GroupStructure> {
    if sizes.is_empty() || sizes.iter().any(|&p| p == 0) {
        return Err(invalid("sizes", "group sizes must be positive"));
    }
    let total: usize = sizes.iter().sum();
    if total != d {
        return Err(invalid("sizes", format!("group sizes sum to {total}, expected d = {d}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut groups = Vec::with_capacity(sizes.len());
    let mut covs = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &p in sizes {
        groups.push((start..start + p).collect());
        start += p;
        let c = match cov_kind {
            CovKind::Identity => DMatrix::identity(p, p),
            CovKind::RandomSpd => {
                let q = random_orthogonal(p, &mut rng);
                let spectrum = DVector::from_fn(p, |_, _| {
                    10f64.powf(rng.random_range(-0.5..=0.5))
                });
                let c = &q * DMatrix::from_diagonal(&spectrum) * q.transpose();
                // Symmetrize away rounding so the SPD check is exact.
                (&c + c.transpose()) * 0.5
            }
        };
        covs.push(c);
    }
    GroupStructure::new(groups, covs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_plus_rotation_is_tight() {
        let f = make_tight_frame(2, FrameKind::IdentityPlusOrthobasis, 1).unwrap();
        assert_eq!(f.k(), 4);
        assert!(f.tightness_defect() < 1e-14);
        assert!(f.projector_defect() < 1e-12);
    }

    #[test]
    fn random_rows_frame_is_tight() {
        let f = make_tight_frame(8, FrameKind::RandomRows { k: 16 }, 42).unwrap();
        assert_eq!((f.d(), f.k()), (8, 16));
        assert!(f.tightness_defect() <= TIGHTNESS_TOL);
        assert!(f.projector_defect() <= 1e-9);
    }

    #[test]
    fn square_frame_is_orthogonal() {
        let f = make_tight_frame(4, FrameKind::RandomRows { k: 4 }, 5).unwrap();
        let w = f.matrix();
        assert!((w.transpose() * w - DMatrix::identity(4, 4)).norm() < 1e-12);
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        // Orthogonal W preserves the Euclidean norm of the coefficients.
        assert!((f.analysis(&u).norm() - u.norm()).abs() < 1e-12);
    }

    #[test]
    fn frame_too_narrow_is_rejected() {
        assert!(make_tight_frame(8, FrameKind::RandomRows { k: 7 }, 0).is_err());
        assert!(make_tight_frame(1, FrameKind::IdentityPlusOrthobasis, 0).is_err());
        let w = DMatrix::from_element(2, 3, 1.0);
        assert!(TightFrame::new(w, FrameKind::Custom).is_err());
    }

    #[test]
    fn frames_are_deterministic_in_seed() {
        let a = make_tight_frame(5, FrameKind::RandomRows { k: 9 }, 11).unwrap();
        let b = make_tight_frame(5, FrameKind::RandomRows { k: 9 }, 11).unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn groups_of_three() {
        let g = make_groups(6, &[3, 3], CovKind::Identity, 0).unwrap();
        assert_eq!(g.k(), 2);
        assert_eq!(g.group(0), &[0, 1, 2]);
        assert_eq!(g.group(1), &[3, 4, 5]);
        assert!(g.all_identity());
    }

    #[test]
    fn random_spd_blocks_are_well_conditioned() {
        let g = make_groups(5, &[2, 3], CovKind::RandomSpd, 9).unwrap();
        for j in 0..g.k() {
            let cond = g.condition_number(j);
            assert!(cond <= 10.0 + 1e-9, "cond {cond}");
            assert!(Cholesky::new(g.cov(j).clone()).is_some());
            let prod = g.cov(j) * g.cov_inv(j);
            assert!((prod - DMatrix::identity(g.group(j).len(), g.group(j).len())).norm() < 1e-10);
        }
    }

    #[test]
    fn invalid_group_sizes() {
        assert!(make_groups(5, &[2, 2], CovKind::Identity, 0).is_err());
        assert!(make_groups(4, &[4, 0], CovKind::Identity, 0).is_err());
        assert!(GroupStructure::with_identity(vec![vec![0, 1], vec![1, 2]]).is_err());
    }

    #[test]
    fn c_norm_convention() {
        let g = GroupStructure::new(vec![vec![0, 1]], vec![DMatrix::identity(2, 2) * 4.0]).unwrap();
        let v = DVector::from_vec(vec![2.0, 0.0]);
        assert!((g.c_norm_sq(0, &v) - 1.0).abs() < 1e-15);
        assert!((g.dual_c_norm(0, &v) - 4.0).abs() < 1e-15);
    }
}

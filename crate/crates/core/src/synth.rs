//! Synthetic problems: Gaussian designs, normalization, sparse and
//! compressible truths, Gaussian noise.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::model::{block_op_norm, Hypermodel, NormalizationFlags, Problem, Structure};
use crate::rng::{derive_seed, rng_from_seed, standard_normal_matrix, standard_normal_vector, Rng};
use crate::theory::ModelSubspace;

/// Row covariance of a Gaussian design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaSpec {
    Identity,
    /// `Sigma_ij = rho^|i - j|`.
    Ar1 { rho: f64 },
}

/// `n x d` matrix with i.i.d. `N(0, Sigma)` rows.
pub fn gaussian_design(n: usize, d: usize, sigma: SigmaSpec, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 || d == 0 {
        return Err(invalid("n", "design dimensions must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let z = standard_normal_matrix(n, d, &mut rng);
    match sigma {
        SigmaSpec::Identity => Ok(z),
        SigmaSpec::Ar1 { rho } => {
            if !(rho.abs() < 1.0) {
                return Err(invalid("rho", format!("must satisfy |rho| < 1, got {rho}")));
            }
            let innovation = (1.0 - rho * rho).sqrt();
            let mut a = z;
            for j in 1..d {
                for i in 0..n {
                    a[(i, j)] = rho * a[(i, j - 1)] + innovation * a[(i, j)];
                }
            }
            Ok(a)
        }
    }
}

/// Standard Gaussian noise vector.
pub fn gaussian_noise(n: usize, seed: u64) -> DVector<f64> {
    standard_normal_vector(n, &mut rng_from_seed(seed))
}

/// Per-column scaling `s` with `A diag(s)` normalized for the structure:
/// unit columns, unit block operator norms (in the `C_j` metric), or, for
/// frames, one global factor making the largest `||(A W)_j||_2 / sqrt(n)` one.
pub fn normalization_scaling(a: &DMatrix<f64>, structure: &Structure) -> Result<DVector<f64>> {
    let d = a.ncols();
    structure.check_dim(d)?;
    let sqrt_n = (a.nrows() as f64).sqrt();
    let zero = |what: &str, j: usize| Error::InvalidParameter {
        name: "A",
        reason: format!("{what} {j} is zero or rank-deficient; cannot normalize"),
    };
    match structure {
        Structure::Coordinate => {
            let mut s = DVector::zeros(d);
            for (j, col) in a.column_iter().enumerate() {
                let norm = col.norm();
                if !(norm > 0.0) {
                    return Err(zero("column", j));
                }
                s[j] = sqrt_n / norm;
            }
            Ok(s)
        }
        Structure::Group(g) => {
            let mut s = DVector::zeros(d);
            for j in 0..g.k() {
                let idx = g.group(j);
                let sub = a.select_columns(idx);
                let smin = if idx.len() <= a.nrows() {
                    sub.singular_values().min()
                } else {
                    0.0
                };
                if !(smin > 0.0) {
                    return Err(zero("block", j));
                }
                let scale = sqrt_n / block_op_norm(a, g, j);
                for &i in idx {
                    s[i] = scale;
                }
            }
            Ok(s)
        }
        Structure::Frame(w) => {
            let aw = a * w.matrix();
            let max = aw.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
            if !(max > 0.0) {
                return Err(zero("frame composite", 0));
            }
            Ok(DVector::from_element(d, sqrt_n / max))
        }
    }
}

/// Rescale `A` for the model's normalization and co-transform the truth:
/// `A' = A diag(s)`, `u*' = u* / s`, `y = A' u*' + eps`.
///
/// The cumulative scaling is recorded so repeated normalization composes.
pub fn normalize(p: &Problem, hm: &Hypermodel) -> Result<Problem> {
    let structure = hm.structure();
    let s = normalization_scaling(p.a(), structure)?;
    let mut a = p.a().clone();
    for (mut col, &sj) in a.column_iter_mut().zip(s.iter()) {
        col *= sj;
    }
    let u_star = p.u_star().map(|u| u.component_div(&s));
    let y = match (&u_star, p.eps()) {
        (Some(u), Some(e)) => &a * u + e,
        _ => p.y().clone(),
    };
    let scaling = match p.scaling() {
        Some(prev) => prev.component_mul(&s),
        None => s,
    };
    let flags = NormalizationFlags::detect(&a, structure);
    Ok(Problem::from_parts(
        a,
        y,
        u_star,
        p.eps().cloned(),
        Some(scaling),
        flags,
    ))
}

/// Sparsity class of a synthetic truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TruthKind {
    /// `s` nonzeros of magnitude `amplitude` with random signs.
    HardSparse { s: usize, amplitude: f64 },
    /// Sorted magnitudes `c j^(-(1 + margin)/q)` scaled to `sum |u_j|^q = R_q`.
    LqBall { q: f64, r_q: f64, margin: f64 },
    /// `s` active groups with `||u_g||_C = amplitude` in random directions.
    GroupSparse { s: usize, amplitude: f64 },
    /// Group norms following the `LqBall` profile.
    GroupLq { q: f64, r_q: f64, margin: f64 },
    /// `u = W c` with `c` having `s` entries of magnitude `amplitude`.
    FrameCompressible { s: usize, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    #[serde(flatten)]
    pub kind: TruthKind,
    pub seed: u64,
}

/// Default exponent margin of the `lq` decay profile.
pub const LQ_MARGIN: f64 = 0.05;

fn lq_profile(len: usize, q: f64, r_q: f64, margin: f64) -> Result<Vec<f64>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid("q", format!("must lie in (0, 1), got {q}")));
    }
    if !(r_q > 0.0) {
        return Err(invalid("r_q", format!("must be positive, got {r_q}")));
    }
    if !(margin >= 0.0) {
        return Err(invalid("margin", format!("must be nonnegative, got {margin}")));
    }
    let exponent = 1.0 + margin;
    let zeta: f64 = (1..=len).map(|j| (j as f64).powf(-exponent)).sum();
    let c = (r_q / zeta).powf(1.0 / q);
    Ok((1..=len).map(|j| c * (j as f64).powf(-exponent / q)).collect())
}

fn random_sign(rng: &mut Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn check_count(name: &'static str, s: usize, units: usize) -> Result<()> {
    if s > units {
        return Err(invalid(name, format!("{s} active units exceed the {units} available")));
    }
    Ok(())
}

/// Truth vector of length `d` for the given structure.
pub fn make_truth(d: usize, spec: &TruthSpec, structure: &Structure) -> Result<DVector<f64>> {
    structure.check_dim(d)?;
    let mut rng = rng_from_seed(spec.seed);
    match (spec.kind, structure) {
        (TruthKind::HardSparse { s, amplitude }, _) => {
            check_count("s", s, d)?;
            let mut u = DVector::zeros(d);
            for j in sample(&mut rng, d, s).into_iter() {
                u[j] = amplitude * random_sign(&mut rng);
            }
            Ok(u)
        }
        (TruthKind::LqBall { q, r_q, margin }, _) => {
            let mags = lq_profile(d, q, r_q, margin)?;
            let perm = sample(&mut rng, d, d).into_vec();
            let mut u = DVector::zeros(d);
            for (m, &j) in mags.iter().zip(perm.iter()) {
                u[j] = m * random_sign(&mut rng);
            }
            Ok(u)
        }
        (TruthKind::GroupSparse { s, amplitude }, Structure::Group(g)) => {
            check_count("s", s, g.k())?;
            let mut u = DVector::zeros(d);
            for j in sample(&mut rng, g.k(), s).into_iter() {
                fill_group(&mut u, g, j, amplitude, &mut rng);
            }
            Ok(u)
        }
        (TruthKind::GroupLq { q, r_q, margin }, Structure::Group(g)) => {
            let mags = lq_profile(g.k(), q, r_q, margin)?;
            let perm = sample(&mut rng, g.k(), g.k()).into_vec();
            let mut u = DVector::zeros(d);
            for (&m, &j) in mags.iter().zip(perm.iter()) {
                fill_group(&mut u, g, j, m, &mut rng);
            }
            Ok(u)
        }
        (TruthKind::FrameCompressible { s, amplitude }, Structure::Frame(w)) => {
            check_count("s", s, w.k())?;
            let mut c = DVector::zeros(w.k());
            for j in sample(&mut rng, w.k(), s).into_iter() {
                c[j] = amplitude * random_sign(&mut rng);
            }
            Ok(w.synthesis(&c))
        }
        (kind, other) => Err(invalid(
            "truth",
            format!("{kind:?} is not compatible with the {} model", other.variant()),
        )),
    }
}

/// `u_g = norm * L z / ||z||`, so `||u_g||_C = norm`.
fn fill_group(u: &mut DVector<f64>, g: &crate::frames::GroupStructure, j: usize, norm: f64, rng: &mut Rng) {
    let p = g.group(j).len();
    let mut z = standard_normal_vector(p, rng);
    while z.norm() == 0.0 {
        z = standard_normal_vector(p, rng);
    }
    let dir = g.cov_cholesky(j) * (z.clone() / z.norm());
    for (&i, x) in g.group(j).iter().zip(dir.iter()) {
        u[i] = norm * x;
    }
}

/// Units whose magnitude exceeds `delta`: `|u_j|`, `||u_g||_C` or
/// `|(W^T u)_j|`.
pub fn threshold_support(u: &DVector<f64>, delta: f64, structure: &Structure) -> Result<ModelSubspace> {
    if !(delta > 0.0) {
        return Err(invalid("delta", format!("must be positive, got {delta}")));
    }
    let mags = structure.magnitudes_sq(u)?;
    let indices = mags
        .iter()
        .enumerate()
        .filter(|(_, &x)| x.sqrt() > delta)
        .map(|(j, _)| j)
        .collect();
    ModelSubspace::new(indices, structure, u.len())
}

/// `sum_j |u_j|^q` over the units of the structure.
pub fn lq_mass(u: &DVector<f64>, q: f64, structure: &Structure) -> Result<f64> {
    Ok(structure.magnitudes_sq(u)?.iter().map(|x| x.sqrt().powf(q)).sum())
}

/// Everything needed to generate one synthetic problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    pub d: usize,
    pub sigma: SigmaSpec,
    pub truth: TruthKind,
    pub normalize: bool,
    pub seed: u64,
}

/// Design, normalization, truth, noise and data, each from its own
/// derived stream. The truth is drawn in normalized coordinates.
pub fn generate_problem(spec: &ProblemSpec, hm: &Hypermodel) -> Result<Problem> {
    let a = gaussian_design(spec.n, spec.d, spec.sigma, derive_seed(spec.seed, &[1]))?;
    let (a, scaling) = if spec.normalize {
        let s = normalization_scaling(&a, hm.structure())?;
        let mut a = a;
        for (mut col, &sj) in a.column_iter_mut().zip(s.iter()) {
            col *= sj;
        }
        (a, Some(s))
    } else {
        (a, None)
    };
    let truth = TruthSpec {
        kind: spec.truth,
        seed: derive_seed(spec.seed, &[2]),
    };
    let u_star = make_truth(spec.d, &truth, hm.structure())?;
    let eps = gaussian_noise(spec.n, derive_seed(spec.seed, &[3]));
    check_len("u_star", spec.d, u_star.len())?;
    let y = &a * &u_star + &eps;
    let flags = NormalizationFlags::detect(&a, hm.structure());
    Ok(Problem::from_parts(a, y, Some(u_star), Some(eps), scaling, flags))
}

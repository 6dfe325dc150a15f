//! Per-trial certified error radius: model subspace, noise threshold,
//! empirical curvature and the resulting `delta`.

use hiermap::rng::derive_seed;
use hiermap::synth::{threshold_support, TruthKind};
use hiermap::theory::{error_radius, lambda_threshold, rsc_estimate, ErrorRadius, ModelSubspace};
use hiermap::{Hypermodel, Problem, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifySpec {
    /// `tau^2 = tau_sq_factor * log(units) / n`.
    pub tau_sq_factor: f64,
    pub rsc_samples: usize,
}

impl Default for CertifySpec {
    fn default() -> Self {
        Self {
            tau_sq_factor: 9.0,
            rsc_samples: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub radius: ErrorRadius,
    pub kappa: f64,
    pub tau_sq: f64,
    pub lambda_threshold: f64,
    pub model_size: usize,
}

impl Certificate {
    /// Finite radius, if any.
    pub fn delta(&self) -> Option<f64> {
        self.radius.delta.is_finite().then_some(self.radius.delta)
    }
}

/// Model subspace of the truth: its exact support for hard-sparse kinds and
/// the units with magnitude above `lambda` for the `lq` kinds.
pub fn truth_subspace(p: &Problem, hm: &Hypermodel, truth: &TruthKind) -> Result<ModelSubspace> {
    let u_star = p.u_star().ok_or_else(|| hiermap::Error::InvalidParameter {
        name: "u_star",
        reason: "certification needs a known truth".into(),
    })?;
    match truth {
        TruthKind::LqBall { .. } | TruthKind::GroupLq { .. } => threshold_support(u_star, hm.lambda(), hm.structure()),
        _ => {
            let support = hm
                .structure()
                .magnitudes_sq(u_star)?
                .iter()
                .enumerate()
                .filter(|(_, &x)| x > 0.0)
                .map(|(j, _)| j)
                .collect();
            ModelSubspace::new(support, hm.structure(), p.d())
        }
    }
}

pub fn certify(p: &Problem, hm: &Hypermodel, truth: &TruthKind, spec: &CertifySpec, seed: u64) -> Result<Certificate> {
    let eps = p.eps().ok_or_else(|| hiermap::Error::InvalidParameter {
        name: "eps",
        reason: "certification needs the noise realization".into(),
    })?;
    let m = truth_subspace(p, hm, truth)?;
    let units = hm.units(p.d()) as f64;
    let tau_sq = spec.tau_sq_factor * units.ln().max(0.0) / p.n() as f64;
    let threshold = lambda_threshold(p.a(), eps, hm)?;
    let rsc = rsc_estimate(p.a(), hm, tau_sq, spec.rsc_samples, derive_seed(seed, &[4]))?;
    let radius = error_radius(
        p.u_star().expect("checked by truth_subspace"),
        &m,
        hm,
        rsc.kappa,
        tau_sq,
        hm.lambda(),
        Some(threshold),
    )?;
    Ok(Certificate {
        radius,
        kappa: rsc.kappa,
        tau_sq,
        lambda_threshold: threshold,
        model_size: m.size(),
    })
}

//! MAP estimation for sparsity-promoting hierarchical Gaussian-gamma models.
//!
//! The three alternating schemes (coordinate, group and frame sparsity)
//! minimize a jointly convex negative log-posterior `J(u, theta)`. Besides
//! the solvers, the crate exposes the quantities needed to check the
//! reconstruction-error theory numerically: decomposable norms and their
//! duals, sandwich bounds, model subspaces, empirical restricted strong
//! convexity and explicit error radii.

pub mod error;
pub mod frames;
pub mod io;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod solver;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
pub use frames::{make_groups, make_tight_frame, CovKind, FrameKind, GroupStructure, TightFrame};
pub use model::{Hypermodel, Problem, Structure, ThetaVector, Variant};
pub use solver::{solve, SolverConfig, SolverState};
pub use theory::{ModelSubspace, Onto};

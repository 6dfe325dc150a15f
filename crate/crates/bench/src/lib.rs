//! Configuration-driven experiments on top of `hiermap`: single solves,
//! property-check suites, rate sweeps and certified-bound runs.
//!
//! The `hiermap` binary is a thin wrapper over [`commands`]; everything it
//! does is reachable from library code, which is how the acceptance tests
//! drive it.

pub mod certify;
pub mod checks;
pub mod commands;
pub mod config;
pub mod rates;
pub mod report;
pub mod spec;
pub mod sweep;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const NON_CONVERGENCE: i32 = 2;
    pub const VIOLATION: i32 = 3;
}

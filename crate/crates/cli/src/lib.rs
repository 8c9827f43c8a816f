//! Sweeps, CSV emission and the verification suite behind the `rfvar` binary.

pub mod grid;
pub mod sweep;
pub mod verify;

pub use grid::GridSpec;
pub use sweep::{run_analytic, run_estimator, run_mc, KappaAxis, McBudget, SweepSpec};
pub use verify::{Check, Level, Report, VerifyContext};

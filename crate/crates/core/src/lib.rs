//! Bias-variance theory of random-feature ridge regression under label noise.
//!
//! * [`analytic`]: closed-form asymptotic decomposition, including the pruned
//!   (masked) model and its q/d variant.
//! * [`quadrature`]: Marchenko-Pastur integrals, an independent route to the
//!   same quantities.
//! * [`simulator`]: finite-size Monte Carlo of the linear random-feature and
//!   masked three-layer models.
//! * [`estimator`]: the split-based bias/variance estimator.
//! * [`sweep`] and [`verify`]: parameter sweeps emitting the CSV schema of
//!   [`record`], and the self-check suite.
//!
//! Numerical code is generic over the scalar type; the aliases below fix it
//! to `f64`, which is what the sweeps and the CSV schema use.

// `!(x > 0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod quadrature;
pub mod record;
pub mod rng;
pub mod scalar;
pub mod simulator;
pub mod types;

pub use analytic::CleanVarianceForm;
pub use error::{Error, Result};
pub use record::{Source, SweepRecord};
pub use rng::{derive_trial_rng, RngStream};
pub use scalar::Real;
pub use types::{Decomposition, HyperParams, ModelGeometry};

pub type Decomposition64 = Decomposition<f64>;
pub type Decomposition32 = Decomposition<f32>;

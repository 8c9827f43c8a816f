//! Finite-size Monte Carlo of the random-feature and masked models.

pub mod dataset;
pub mod gap;
pub mod masked;
pub mod mc;
pub mod ridge;

pub use dataset::{gen_dataset, SyntheticDataset};
pub use gap::operator_gap;
pub use masked::{masked_fit, mc_masked_risk, mc_masked_risk_with, LastLayerScale};
pub use mc::{mc_decomposition, mc_decomposition_in, McConfig, McDecomposition};
pub use ridge::{compute_ab, rf_ridge, ridge_operators, RidgeOperators};

//! Finite-size gap between the population operator `B~ B~^T` and its sample
//! counterpart `(n/d) A A^T`.

use nalgebra::DMatrix;

use crate::error::{domain, Result};
use crate::linalg::{add_diagonal, spd_solve, spectral_norm_sym, PowerIterationOptions};
use crate::rng::RngStream;
use crate::simulator::dataset::{gaussian_matrix, gaussian_vector};
use crate::simulator::ridge::ridge_operators;
use crate::types::ModelGeometry;

/// `||B~ B~^T - (n/d) A A^T||_2` for one draw of `(X, W)`, where
/// `B~ = W^T (W W^T + lambda0 I)^{-1} W` and `A` uses `lambda = (n/d) lambda0`.
///
/// Draws `X`, then `W`, then the power-iteration start vector from `rng`.
pub fn operator_gap(geometry: &ModelGeometry, lambda0: f64, rng: &mut RngStream) -> Result<f64> {
    if !(lambda0 > 0.0) {
        return Err(domain("operator_gap", "lambda0 must be > 0"));
    }
    let (d, n, p) = (geometry.d(), geometry.n(), geometry.p());
    let scale = 1.0 / (d as f64).sqrt();
    let x: DMatrix<f64> = gaussian_matrix(d, n, scale, rng);
    let w: DMatrix<f64> = gaussian_matrix(p, d, scale, rng);
    let start = gaussian_vector(d, 1.0, rng);

    let mut k = &w * w.transpose();
    add_diagonal(&mut k, lambda0);
    let b_tilde = w.tr_mul(&spd_solve(k, &w)?);
    let c = &x * x.transpose();
    let ops = ridge_operators(&w, &c, geometry.rho() * lambda0)?;
    let a_at = &ops.b * &ops.s;
    let mut gap = &b_tilde * b_tilde.transpose() - a_at * geometry.rho();
    gap = (&gap + gap.transpose()) * 0.5;
    spectral_norm_sym(&gap, start, &PowerIterationOptions::default())
}

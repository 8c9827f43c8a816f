//! Random-feature ridge regression and its linear response operators.
//!
//! With features `F = W X` the ridge solution is
//! `beta = (F F^T + lambda I)^{-1} F y` and the learned linear map is
//! `W^T beta = S X y` where `S = W^T (W C W^T + lambda I)^{-1} W` and `C = X X^T`.
//! Then `A = S X` (response to label noise) and `B = A X^T = S C` (response to
//! the teacher). Only `d x d` and `p x p` work is needed once `C` is known.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::linalg::{add_diagonal, spd_factor, spd_solve};
use crate::scalar::Real;

const RESIDUAL_TOL: f64 = 1e-8;

fn check_lambda<T: Real>(op: &'static str, lambda: T) -> Result<()> {
    if lambda > T::zero() {
        Ok(())
    } else {
        Err(domain(op, "lambda must be > 0"))
    }
}

/// Second-layer ridge weights `beta` (length `p`).
///
/// Factors the `p x p` Gram system when `p <= n`, otherwise the `n x n` dual
/// system `beta = F (F^T F + lambda I)^{-1} y`. The primal normal equations are
/// checked afterwards; one step of iterative refinement is applied if the
/// relative residual exceeds `1e-8`.
pub fn rf_ridge<T: Real>(w: &DMatrix<T>, x: &DMatrix<T>, y: &DVector<T>, lambda: T) -> Result<DVector<T>> {
    check_lambda("rf_ridge", lambda)?;
    if w.ncols() != x.nrows() || x.ncols() != y.len() {
        return Err(domain("rf_ridge", "shape mismatch between W, X and y"));
    }
    let (p, n) = (w.nrows(), x.ncols());
    let f = w * x;
    let fy = &f * y;
    let normal = |b: &DVector<T>| -> DVector<T> { &f * f.tr_mul(b) + b * lambda - &fy };
    let scale = fy.norm().to_f64();

    let beta = if p <= n {
        let mut k = &f * f.transpose();
        add_diagonal(&mut k, lambda);
        let chol = spd_factor(k)?;
        let mut beta = chol.solve(&fy);
        let residual = normal(&beta);
        if residual.norm().to_f64() > RESIDUAL_TOL * scale {
            beta -= chol.solve(&residual);
        }
        beta
    } else {
        let mut g = f.tr_mul(&f);
        add_diagonal(&mut g, lambda);
        let r = spd_factor(g)?.solve(y);
        &f * r
    };

    let res = normal(&beta).norm().to_f64();
    if res > RESIDUAL_TOL * scale {
        return Err(Error::Residual {
            residual: res / scale.max(f64::MIN_POSITIVE),
            tol: RESIDUAL_TOL,
        });
    }
    Ok(beta)
}

/// Explicit `A = W^T (F F^T + lambda I)^{-1} F` (`d x n`) and `B = A X^T` (`d x d`).
pub fn compute_ab<T: Real>(w: &DMatrix<T>, x: &DMatrix<T>, lambda: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
    check_lambda("compute_ab", lambda)?;
    if w.ncols() != x.nrows() {
        return Err(domain("compute_ab", "shape mismatch between W and X"));
    }
    let f = w * x;
    let mut k = &f * f.transpose();
    add_diagonal(&mut k, lambda);
    let a = w.tr_mul(&spd_solve(k, &f)?);
    let b = &a * x.transpose();
    Ok((a, b))
}

/// The response operators of one draw of `(X, W)`, computed from `C = X X^T`.
#[derive(Debug, Clone)]
pub struct RidgeOperators<T: Real> {
    /// `S = W^T (W C W^T + lambda I)^{-1} W`, symmetric `d x d`.
    pub s: DMatrix<T>,
    /// `B = S C`.
    pub b: DMatrix<T>,
    /// `||A||_F^2 = tr(S C S)`.
    pub a_fro_sq: T,
}

/// Builds [`RidgeOperators`] for features `w` (`p x d`) and input Gram `c` (`d x d`).
pub fn ridge_operators<T: Real>(w: &DMatrix<T>, c: &DMatrix<T>, lambda: T) -> Result<RidgeOperators<T>> {
    check_lambda("ridge_operators", lambda)?;
    let wc = w * c;
    let mut k = &wc * w.transpose();
    add_diagonal(&mut k, lambda);
    let z = spd_solve(k, w)?;
    let mut s = w.tr_mul(&z);
    s = (&s + s.transpose()) * T::cast(0.5);
    let b = &s * c;
    let a_fro_sq = b.dot(&s.transpose());
    Ok(RidgeOperators { s, b, a_fro_sq })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_trial_rng;
    use crate::simulator::dataset::{gaussian_matrix, gaussian_vector};
    use approx::assert_relative_eq;

    /// Gauss-Jordan inverse with partial pivoting, independent of nalgebra's
    /// factorizations.
    fn textbook_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut a = m.clone();
        let mut inv = DMatrix::<f64>::identity(n, n);
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs())).unwrap();
            a.swap_rows(col, pivot);
            inv.swap_rows(col, pivot);
            let p = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for i in 0..n {
                if i != col {
                    let factor = a[(i, col)];
                    for j in 0..n {
                        a[(i, j)] -= factor * a[(col, j)];
                        inv[(i, j)] -= factor * inv[(col, j)];
                    }
                }
            }
        }
        inv
    }

    fn instance(d: usize, n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let mut rng = derive_trial_rng(seed, 0);
        let x = gaussian_matrix(d, n, 1.0, &mut rng);
        let w = gaussian_matrix(p, d, 1.0, &mut rng);
        let y = gaussian_vector(n, 1.0, &mut rng);
        (w, x, y)
    }

    #[test]
    fn matches_dense_inverse_on_small_instance() {
        let (w, x, y) = instance(3, 5, 2, 1);
        let lambda = 0.7;
        let f = &w * &x;
        let k = &f * f.transpose() + DMatrix::identity(2, 2) * lambda;
        let expect = textbook_inverse(&k) * &f * &y;
        assert_relative_eq!(rf_ridge(&w, &x, &y, lambda).unwrap(), expect, epsilon = 1e-10);
    }

    #[test]
    fn dual_path_matches_primal() {
        // p > n forces the n x n route
        let (w, x, y) = instance(4, 3, 6, 2);
        let lambda = 0.3;
        let f = &w * &x;
        let k = &f * f.transpose() + DMatrix::identity(6, 6) * lambda;
        let expect = textbook_inverse(&k) * &f * &y;
        assert_relative_eq!(rf_ridge(&w, &x, &y, lambda).unwrap(), expect, epsilon = 1e-9);
    }

    #[test]
    fn scalar_feature_closed_form() {
        let (_, x, y) = instance(3, 5, 1, 3);
        let w = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let f: DVector<f64> = x.row(1).transpose();
        let lambda = 0.4;
        let beta = rf_ridge(&w, &x, &y, lambda).unwrap();
        assert_relative_eq!(beta[0], f.dot(&y) / (f.dot(&f) + lambda), max_relative = 1e-12);
    }

    #[test]
    fn shrinkage_bound() {
        let (w, x, y) = instance(4, 10, 3, 4);
        let fy = (&w * &x) * &y;
        for lambda in [1.0, 1e2, 1e6] {
            let beta = rf_ridge(&w, &x, &y, lambda).unwrap();
            assert!(beta.norm() <= fy.norm() / lambda * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rejects_nonpositive_lambda_and_bad_shapes() {
        let (w, x, y) = instance(3, 5, 2, 5);
        assert!(rf_ridge(&w, &x, &y, 0.0).is_err());
        assert!(rf_ridge(&w, &x, &DVector::zeros(4), 1.0).is_err());
        assert!(compute_ab(&w, &x, -1.0).is_err());
    }

    #[test]
    fn ab_match_dense_inverse() {
        let (w, x, _) = instance(3, 5, 4, 6);
        let lambda = 0.9;
        let f = &w * &x;
        let k = &f * f.transpose() + DMatrix::identity(4, 4) * lambda;
        let a_expect = w.transpose() * textbook_inverse(&k) * &f;
        let (a, b) = compute_ab(&w, &x, lambda).unwrap();
        assert_relative_eq!(a, a_expect, epsilon = 1e-10);
        assert_eq!(b, &a * x.transpose());
    }

    #[test]
    fn zero_features_give_zero_operators() {
        let (_, x, _) = instance(3, 5, 2, 7);
        let w = DMatrix::zeros(2, 3);
        let (a, b) = compute_ab(&w, &x, 1.0).unwrap();
        assert!(a.iter().all(|&v| v == 0.0) && b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gram_route_matches_explicit_route() {
        let (w, x, _) = instance(6, 40, 9, 8);
        let lambda = 2.5;
        let (a, b) = compute_ab(&w, &x, lambda).unwrap();
        let ops = ridge_operators(&w, &(&x * x.transpose()), lambda).unwrap();
        assert_relative_eq!(ops.b, b, epsilon = 1e-10);
        assert_relative_eq!(ops.a_fro_sq, a.norm_squared(), max_relative = 1e-10);
        assert_relative_eq!(&ops.s * &x, a, epsilon = 1e-10);
    }

    #[test]
    fn wide_ridgeless_map_approaches_identity() {
        let (d, p) = (32, 64);
        let n = 64 * d;
        let mut rng = derive_trial_rng(9, 0);
        let x: DMatrix<f64> = gaussian_matrix(d, n, 1.0 / (d as f64).sqrt(), &mut rng);
        let w: DMatrix<f64> = gaussian_matrix(p, d, 1.0 / (d as f64).sqrt(), &mut rng);
        let (_, b) = compute_ab(&w, &x, 1e-6).unwrap();
        let dist = (b - DMatrix::identity(d, d)).norm();
        assert!(dist <= 0.05, "||B - I||_F = {dist}");
    }

    #[test]
    fn permuting_examples_changes_nothing() {
        let (w, x, y) = instance(4, 12, 3, 10);
        let perm: Vec<usize> = (0..12).rev().map(|i| (i * 5) % 12).collect();
        let xp = DMatrix::from_fn(4, 12, |i, j| x[(i, perm[j])]);
        let yp = DVector::from_fn(12, |j, _| y[perm[j]]);
        let lambda = 0.5;
        assert_relative_eq!(rf_ridge(&w, &x, &y, lambda).unwrap(), rf_ridge(&w, &xp, &yp, lambda).unwrap(), epsilon = 1e-10);
        let (a, b) = compute_ab(&w, &x, lambda).unwrap();
        let (ap, bp) = compute_ab(&w, &xp, lambda).unwrap();
        assert_relative_eq!(b, bp, epsilon = 1e-10);
        assert_relative_eq!(a.norm_squared(), ap.norm_squared(), max_relative = 1e-10);
    }

    #[test]
    fn single_precision_path_runs() {
        let mut rng = derive_trial_rng(12, 0);
        let x: DMatrix<f32> = gaussian_matrix(4, 30, 0.5, &mut rng);
        let w: DMatrix<f32> = gaussian_matrix(3, 4, 0.5, &mut rng);
        let ops = ridge_operators(&w, &(&x * x.transpose()), 0.5).unwrap();
        let (a, _) = compute_ab(&w, &x, 0.5).unwrap();
        assert!((ops.a_fro_sq - a.norm_squared()).abs() < 1e-4);
    }
}

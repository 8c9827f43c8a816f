//! Dense SPD solves and spectral norms.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cholesky factor of an SPD matrix. On failure the diagonal is shifted by
/// `1e-10 * trace / dim` and the factorization retried once.
pub fn spd_factor<T: Real>(k: DMatrix<T>) -> Result<Cholesky<T, Dyn>> {
    let dim = k.nrows();
    let jitter = T::cast(1e-10) * k.trace() / T::cast(dim.max(1) as f64);
    let retry = k.clone();
    if let Some(chol) = Cholesky::new(k) {
        return Ok(chol);
    }
    let mut shifted = retry;
    for i in 0..dim {
        shifted[(i, i)] += jitter;
    }
    Cholesky::new(shifted).ok_or(Error::Factorization {
        dim,
        jitter: jitter.to_f64(),
    })
}

/// Solves `K X = rhs` for SPD `K`.
pub fn spd_solve<T: Real>(k: DMatrix<T>, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
    Ok(spd_factor(k)?.solve(rhs))
}

/// Adds `shift` to the diagonal in place.
pub(crate) fn add_diagonal<T: Real>(m: &mut DMatrix<T>, shift: T) {
    let n = m.nrows().min(m.ncols());
    for i in 0..n {
        m[(i, i)] += shift;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationOptions {
    /// Iterations run before the convergence test is consulted.
    pub warm_start: usize,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self {
            warm_start: 64,
            rel_tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

/// Spectral norm `max |eig|` of a symmetric matrix by power iteration.
///
/// The estimate at each step is `||D v||` for the current unit vector `v`,
/// i.e. the square root of the Rayleigh quotient of `D^2`, which converges to
/// the top singular value even when `D` is indefinite.
pub fn spectral_norm_sym<T: Real>(d: &DMatrix<T>, start: DVector<T>, opts: &PowerIterationOptions) -> Result<T> {
    assert_eq!(d.nrows(), d.ncols(), "spectral_norm_sym needs a square matrix");
    let mut v = start;
    let norm = v.norm();
    if norm == T::zero() {
        v = DVector::from_element(d.nrows(), T::one());
    }
    v.normalize_mut();
    let tol = T::cast(opts.rel_tol);
    let mut estimate = T::zero();
    for iter in 0..opts.max_iter {
        let w = d * &v;
        let next = w.norm();
        if next == T::zero() {
            return Ok(T::zero());
        }
        v = w / next;
        if iter >= opts.warm_start && (next - estimate).abs() <= tol * next {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::PowerIteration {
        iterations: opts.max_iter,
    })
}

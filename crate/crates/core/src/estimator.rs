//! Split-based bias/variance estimator.
//!
//! The training set is cut into `K` disjoint equal subsets, one model is
//! trained per subset, and on a fresh clean test set
//!
//! * the average test loss is the mean over models of the mean squared error,
//! * the variance is the unbiased spread of predictions across models,
//! * the squared bias is their difference.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::rng::{derive_trial_rng, RngStream};
use crate::simulator::dataset::{gaussian_matrix, SyntheticDataset};
use crate::simulator::ridge::rf_ridge;
use crate::types::{HyperParams, ModelGeometry};

pub const MIN_TEST_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitEstimate {
    pub avg_test_loss: f64,
    pub variance_est: f64,
    pub bias_sq_est: f64,
    pub n_splits: usize,
    pub test_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplitOptions {
    /// Share one first layer across all splits instead of drawing one per split.
    pub fixed_w: bool,
    /// Give every split the same examples (the first subset). Only useful for testing.
    pub identical_splits: bool,
}

/// Label-noise variance `sigma^2 = (m / d) sigma0^2` that makes `sigma0_sq` the
/// scaled noise level seen by each split of size `m = floor(n / n_splits)`.
pub fn split_noise_variance(geometry: &ModelGeometry, n_splits: usize, sigma0_sq: f64) -> f64 {
    (geometry.n() / n_splits.max(1)) as f64 / geometry.d() as f64 * sigma0_sq
}

/// Runs the split estimator on `dataset` with default options.
pub fn split_estimate(
    dataset: &SyntheticDataset<f64>,
    n_splits: usize,
    geometry: &ModelGeometry,
    hyper: &HyperParams,
    test_size: usize,
    rng: &mut RngStream,
) -> Result<SplitEstimate> {
    split_estimate_with(dataset, n_splits, geometry, hyper, test_size, SplitOptions::default(), rng)
}

/// Runs the split estimator.
///
/// Consumes from `rng`, in order: the split permutation, a seed for the
/// per-split first layers, and the test inputs. Examples beyond
/// `n_splits * floor(n / n_splits)` are dropped. Each split is fitted with
/// `lambda = (m / d) lambda0` where `m` is the split size.
pub fn split_estimate_with(
    dataset: &SyntheticDataset<f64>,
    n_splits: usize,
    geometry: &ModelGeometry,
    hyper: &HyperParams,
    test_size: usize,
    options: SplitOptions,
    rng: &mut RngStream,
) -> Result<SplitEstimate> {
    let (d, n) = dataset.x.shape();
    if n_splits < 2 {
        return Err(Error::Config("n_splits must be at least 2".into()));
    }
    if n_splits > n {
        return Err(Error::Config(format!("n_splits = {n_splits} exceeds n = {n}")));
    }
    if test_size < MIN_TEST_POINTS {
        return Err(Error::Config(format!("test_size must be at least {MIN_TEST_POINTS}")));
    }
    if d != geometry.d() {
        return Err(domain("split_estimate", "dataset dimension differs from geometry"));
    }
    let m = n / n_splits;
    let lambda = m as f64 / d as f64 * hyper.lambda0();
    if !(lambda > 0.0) {
        return Err(domain("split_estimate", "lambda0 must be > 0"));
    }
    let p = geometry.p();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let w_seed: u64 = rng.random();
    let x_test: DMatrix<f64> = gaussian_matrix(d, test_size, 1.0 / (d as f64).sqrt(), rng);
    let y_test = x_test.tr_mul(&dataset.theta);

    let preds = (0..n_splits)
        .into_par_iter()
        .map(|s| {
            let block = if options.identical_splits { 0 } else { s };
            let idx = &order[block * m..(block + 1) * m];
            let xs = dataset.x.select_columns(idx);
            let ys = DVector::from_iterator(m, idx.iter().map(|&i| dataset.y[i]));
            let stream = if options.fixed_w || options.identical_splits { 0 } else { s as u64 };
            let w: DMatrix<f64> = gaussian_matrix(p, d, 1.0 / (d as f64).sqrt(), &mut derive_trial_rng(w_seed, stream));
            let beta = rf_ridge(&w, &xs, &ys, lambda)?;
            Ok(x_test.tr_mul(&w.tr_mul(&beta)))
        })
        .collect::<Result<Vec<DVector<f64>>>>()?;

    let k = n_splits as f64;
    let avg_test_loss = preds.iter().map(|f| (f - &y_test).norm_squared() / test_size as f64).sum::<f64>() / k;
    // pairwise form of the unbiased variance: identical predictors give exactly zero
    let mut pair_sum = 0.0;
    for a in 0..n_splits {
        for b in a + 1..n_splits {
            pair_sum += (&preds[a] - &preds[b]).norm_squared();
        }
    }
    let variance_est = pair_sum / (k * (k - 1.0)) / test_size as f64;
    Ok(SplitEstimate {
        avg_test_loss,
        variance_est,
        bias_sq_est: avg_test_loss - variance_est,
        n_splits,
        test_points: test_size,
    })
}

//! Monte Carlo estimation of the risk decomposition.
//!
//! Each trial draws `(X, W)` from its own stream and records the teacher
//! response `B_t` and `||A_t||_F^2`. The expectations over `theta` and the
//! label noise are taken in closed form:
//!
//! * `Bias^2 = ||mean_t B_t - I||_F^2 / d`
//! * `Variance_clean = sum_t ||B_t - mean B||_F^2 / ((T - 1) d)`
//! * `Variance_noise = sigma^2 mean_t ||A_t||_F^2 / d`
//!
//! Trials run in parallel on the ambient rayon pool and are reduced in trial
//! order, so results do not depend on the thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{child_seed, derive_trial_rng, RngStream};
use crate::scalar::Real;
use crate::simulator::dataset::{gaussian_matrix, gaussian_vector, gen_dataset};
use crate::simulator::ridge::{compute_ab, rf_ridge, ridge_operators};
use crate::types::{Decomposition, HyperParams, ModelGeometry};

/// Monte Carlo budget and model point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub geometry: ModelGeometry,
    pub hyper: HyperParams,
    pub trials: usize,
    pub master_seed: u64,
    /// Redraw `theta` per trial in the sampled-risk mode (the decomposition
    /// itself integrates `theta` out).
    pub theta_resample: bool,
}

impl McConfig {
    pub fn new(geometry: ModelGeometry, hyper: HyperParams, trials: usize, master_seed: u64) -> Result<Self> {
        if trials < 2 {
            return Err(Error::Config(format!("need at least 2 trials, got {trials}")));
        }
        Ok(Self {
            geometry,
            hyper,
            trials,
            master_seed,
            theta_resample: true,
        })
    }

    /// Whether `n/d` is below the recommended ratio of 8.
    pub fn undersampled(&self) -> bool {
        self.geometry.rho() < 8.0
    }

    pub(crate) fn require_ridge(&self) -> Result<()> {
        if self.hyper.lambda() > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("Monte Carlo needs lambda0 > 0".into()))
        }
    }
}

/// Monte Carlo decomposition with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McDecomposition {
    pub decomposition: Decomposition<f64>,
    pub se_bias_sq: f64,
    pub se_var_clean: f64,
    pub se_var_noise: f64,
    /// Standard error of the per-trial risk `||B_t - I||^2/d + sigma^2 ||A_t||^2/d`.
    pub se_risk: f64,
    pub trials: usize,
    pub geometry: ModelGeometry,
    pub hyper: HyperParams,
}

impl McDecomposition {
    pub fn standard_errors(&self) -> Decomposition<f64> {
        Decomposition {
            bias_sq: self.se_bias_sq,
            var_clean: self.se_var_clean,
            var_noise: self.se_var_noise,
            risk: self.se_risk,
        }
    }
}

/// Per-trial output: `B_t` and `||A_t||_F^2`, stored in double precision.
pub(crate) struct TrialResponse {
    pub b: DMatrix<f64>,
    pub a_fro_sq: f64,
}

pub(crate) fn to_f64_matrix<T: Real>(m: &DMatrix<T>) -> DMatrix<f64> {
    m.map(|v| v.to_f64())
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Reduces ordered per-trial responses into the decomposition.
pub(crate) fn reduce(responses: &[TrialResponse], config: &McConfig) -> McDecomposition {
    let t = responses.len();
    let tf = t as f64;
    let d = config.geometry.d();
    let df = d as f64;
    let sigma_sq = config.hyper.sigma_sq();

    let mut mean_b = DMatrix::<f64>::zeros(d, d);
    for r in responses {
        mean_b += &r.b;
    }
    mean_b /= tf;
    let mut centered_mean = mean_b.clone();
    for i in 0..d {
        centered_mean[(i, i)] -= 1.0;
    }
    let bias_sq = centered_mean.norm_squared() / df;

    let mut spread = Vec::with_capacity(t);
    let mut bias_influence = Vec::with_capacity(t);
    let mut noise = Vec::with_capacity(t);
    let mut risk = Vec::with_capacity(t);
    for r in responses {
        let dev = &r.b - &mean_b;
        spread.push(dev.norm_squared() / df);
        bias_influence.push(2.0 * dev.dot(&centered_mean) / df);
        let n_t = sigma_sq * r.a_fro_sq / df;
        noise.push(n_t);
        let mut to_identity = r.b.clone();
        for i in 0..d {
            to_identity[(i, i)] -= 1.0;
        }
        risk.push(to_identity.norm_squared() / df + n_t);
    }
    let correction = tf / (tf - 1.0);
    let (spread_mean, spread_se) = mean_and_se(&spread);
    let (_, bias_se) = mean_and_se(&bias_influence);
    let var_noise = sigma_sq * responses.iter().map(|r| r.a_fro_sq).sum::<f64>() / tf / df;
    let (_, noise_se) = mean_and_se(&noise);
    let (_, risk_se) = mean_and_se(&risk);

    McDecomposition {
        decomposition: Decomposition::from_parts(bias_sq, correction * spread_mean, var_noise),
        se_bias_sq: bias_se,
        se_var_clean: correction * spread_se,
        se_var_noise: noise_se,
        se_risk: risk_se,
        trials: t,
        geometry: config.geometry,
        hyper: config.hyper,
    }
}

/// Draws the inputs and first layer of one trial: `X ~ N(0, I/d)` columns,
/// then `W ~ N(0, 1/d)` entries.
pub(crate) fn draw_inputs_and_features<T: Real>(geometry: &ModelGeometry, rng: &mut RngStream) -> (DMatrix<T>, DMatrix<T>) {
    let (d, n, p) = (geometry.d(), geometry.n(), geometry.p());
    let scale = 1.0 / (d as f64).sqrt();
    let x = gaussian_matrix(d, n, scale, rng);
    let w = gaussian_matrix(p, d, scale, rng);
    (x, w)
}

fn two_layer_trial<T: Real>(config: &McConfig, trial: usize) -> Result<TrialResponse> {
    let mut rng = derive_trial_rng(config.master_seed, trial as u64);
    let (x, w) = draw_inputs_and_features::<T>(&config.geometry, &mut rng);
    let c = &x * x.transpose();
    let ops = ridge_operators(&w, &c, T::cast(config.hyper.lambda()))?;
    Ok(TrialResponse {
        b: to_f64_matrix(&ops.b),
        a_fro_sq: ops.a_fro_sq.to_f64(),
    })
}

/// Monte Carlo estimate of the two-layer decomposition, computed in scalar type `T`.
pub fn mc_decomposition_in<T: Real>(config: &McConfig) -> Result<McDecomposition> {
    config.require_ridge()?;
    let responses = (0..config.trials)
        .into_par_iter()
        .map(|t| two_layer_trial::<T>(config, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(&responses, config))
}

/// Monte Carlo estimate of the two-layer decomposition in double precision.
pub fn mc_decomposition(config: &McConfig) -> Result<McDecomposition> {
    mc_decomposition_in::<f64>(config)
}

/// Directly sampled noise variance for one fixed `(X, W)`: fits the ridge
/// model on `draws` independent noise vectors (with a fixed teacher) and
/// returns the unbiased spread of the learned map, `(estimate, standard error)`.
///
/// Its expectation is `sigma^2 ||A||_F^2 / d`, the quantity the decomposition
/// computes without sampling noise.
pub fn sampled_noise_variance<T: Real>(
    w: &DMatrix<T>,
    x: &DMatrix<T>,
    theta: &DVector<T>,
    sigma_sq: f64,
    lambda: f64,
    draws: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    if draws < 2 {
        return Err(Error::Config("need at least 2 noise draws".into()));
    }
    let d = x.nrows() as f64;
    let clean = x.tr_mul(theta);
    let maps: Vec<DVector<f64>> = (0..draws)
        .map(|_| {
            let eps: DVector<T> = gaussian_vector(x.ncols(), sigma_sq.sqrt(), rng);
            let beta = rf_ridge(w, x, &(&clean + eps), T::cast(lambda))?;
            Ok(w.tr_mul(&beta).map(|v| v.to_f64()))
        })
        .collect::<Result<_>>()?;
    let k = draws as f64;
    let mean = maps.iter().fold(DVector::zeros(x.nrows()), |acc, g| acc + g) / k;
    let spread: Vec<f64> = maps.iter().map(|g| (g - &mean).norm_squared() / d).collect();
    let (m, se) = mean_and_se(&spread);
    Ok((m * k / (k - 1.0), se * k / (k - 1.0)))
}

/// Fully sampled risk of the two-layer model: every trial draws a dataset
/// (including `theta` and label noise), fits `beta` and scores
/// `||W^T beta - theta||^2 / d`. Returns `(mean risk, standard error)`.
pub fn mc_sampled_risk(config: &McConfig) -> Result<(f64, f64)> {
    config.require_ridge()?;
    let fixed_theta = if config.theta_resample {
        None
    } else {
        let mut rng = derive_trial_rng(child_seed(config.master_seed, 0x7e7a), 0);
        Some(gaussian_vector::<f64, _>(config.geometry.d(), 1.0, &mut rng))
    };
    let risks = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = derive_trial_rng(config.master_seed, t as u64);
            let mut data = gen_dataset::<f64, _>(&config.geometry, config.hyper.sigma_sq(), &mut rng);
            if let Some(theta) = &fixed_theta {
                data.theta = theta.clone();
                data.y = data.x.tr_mul(theta) + &data.eps;
            }
            let d = config.geometry.d();
            let w: DMatrix<f64> = gaussian_matrix(config.geometry.p(), d, 1.0 / (d as f64).sqrt(), &mut rng);
            let beta = rf_ridge(&w, &data.x, &data.y, config.hyper.lambda())?;
            Ok((w.tr_mul(&beta) - &data.theta).norm_squared() / d as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_se(&risks))
}

/// `sigma^2 ||A||_F^2 / d` for one fixed `(X, W)`, via the explicit operator.
pub fn exact_noise_variance<T: Real>(w: &DMatrix<T>, x: &DMatrix<T>, sigma_sq: f64, lambda: f64) -> Result<f64> {
    let (a, _) = compute_ab(w, x, T::cast(lambda))?;
    Ok(sigma_sq * a.norm_squared().to_f64() / x.nrows() as f64)
}

//! The masked three-layer model `f(x) = ((V ⊙ M) W x)^T mu`.
//!
//! Only `V` is trained. Writing `D_i = diag(M_i)` and `Sigma = sum_i mu_i^2 D_i`,
//! the ridge solution is `V_i = mu_i D_i F (F^T Sigma F + lambda I)^{-1} y`, so
//! the effective linear map is `W^T Sigma F (F^T Sigma F + lambda I)^{-1} y`.
//! With `P = Sigma^{1/2} W` this is the two-layer predictor with features `P`,
//! which is how the Monte Carlo integrates out `theta` and the label noise.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::linalg::{add_diagonal, spd_factor};
use crate::rng::{derive_trial_rng, RngStream};
use crate::scalar::Real;
use crate::simulator::dataset::{gaussian_matrix, gaussian_vector, gen_dataset};
use crate::simulator::mc::{draw_inputs_and_features, reduce, to_f64_matrix, McConfig, McDecomposition, TrialResponse};
use crate::simulator::ridge::ridge_operators;
use crate::types::ModelGeometry;

const RESIDUAL_TOL: f64 = 1e-8;

/// Variance of the fixed last-layer weights `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LastLayerScale {
    /// `mu ~ N(0, 1/q)`, so `Sigma ≈ alpha I`.
    #[default]
    InverseQ,
    /// `mu ~ N(0, 1/d)`, so `Sigma ≈ kappa alpha I`.
    InverseD,
}

impl LastLayerScale {
    fn std(self, geometry: &ModelGeometry, q: usize) -> f64 {
        match self {
            LastLayerScale::InverseQ => 1.0 / (q as f64).sqrt(),
            LastLayerScale::InverseD => 1.0 / (geometry.d() as f64).sqrt(),
        }
    }
}

/// Diagonal of `Sigma = sum_i mu_i^2 D_i`.
pub fn mask_gram<T: Real>(mask: &DMatrix<T>, mu: &DVector<T>) -> DVector<T> {
    let mu_sq = mu.component_mul(mu);
    mask.tr_mul(&mu_sq)
}

/// Trained head `V_hat` (`q x p`) of the masked model. Entries outside the
/// mask are zero.
///
/// Solves the `n x n` system `F^T Sigma F + lambda I` when `n <= p`, otherwise
/// the `p x p` system in `Sigma^{1/2} F`.
pub fn masked_fit<T: Real>(
    w: &DMatrix<T>,
    x: &DMatrix<T>,
    y: &DVector<T>,
    mask: &DMatrix<T>,
    mu: &DVector<T>,
    lambda: T,
) -> Result<DMatrix<T>> {
    if lambda <= T::zero() {
        return Err(domain("masked_fit", "lambda must be > 0"));
    }
    let (p, n) = (w.nrows(), x.ncols());
    if w.ncols() != x.nrows() || y.len() != n || mask.ncols() != p || mask.nrows() != mu.len() {
        return Err(domain("masked_fit", "shape mismatch"));
    }
    if mask.iter().any(|&m| m != T::zero() && m != T::one()) {
        return Err(domain("masked_fit", "mask entries must be 0 or 1"));
    }
    let f = w * x;
    let sigma = mask_gram(mask, mu);

    // u = F (F^T Sigma F + lambda I)^{-1} y
    let u = if n <= p {
        let sf = DMatrix::from_fn(p, n, |j, k| sigma[j] * f[(j, k)]);
        let mut k = f.tr_mul(&sf);
        add_diagonal(&mut k, lambda);
        &f * spd_factor(k)?.solve(y)
    } else {
        let root = sigma.map(|s| s.sqrt());
        let g = DMatrix::from_fn(p, n, |j, k| root[j] * f[(j, k)]);
        let mut k = &g * g.transpose();
        add_diagonal(&mut k, lambda);
        let z = spd_factor(k)?.solve(&(&g * y));
        (&f * y - &f * g.tr_mul(&z)) / lambda
    };

    let v = DMatrix::from_fn(mask.nrows(), p, |i, j| mu[i] * mask[(i, j)] * u[j]);
    check_normal_equations(&f, y, mask, mu, &v, lambda)?;
    Ok(v)
}

/// `lambda V_ij - mu_i M_ij (F r)_j` with `r = y - F^T sum_i mu_i D_i V_i`.
fn check_normal_equations<T: Real>(
    f: &DMatrix<T>,
    y: &DVector<T>,
    mask: &DMatrix<T>,
    mu: &DVector<T>,
    v: &DMatrix<T>,
    lambda: T,
) -> Result<()> {
    let head = effective_head(mask, mu, v);
    let fr = f * (y - f.tr_mul(&head));
    let fy = f * y;
    let mut res = T::zero();
    let mut scale = T::zero();
    for i in 0..v.nrows() {
        for j in 0..v.ncols() {
            let gate = mu[i] * mask[(i, j)];
            let r = lambda * v[(i, j)] - gate * fr[j];
            res += r * r;
            scale += (gate * fy[j]) * (gate * fy[j]);
        }
    }
    let (res, scale) = (res.sqrt().to_f64(), scale.sqrt().to_f64());
    if res > RESIDUAL_TOL * scale.max(f64::MIN_POSITIVE) && res > 0.0 {
        return Err(Error::Residual {
            residual: res / scale.max(f64::MIN_POSITIVE),
            tol: RESIDUAL_TOL,
        });
    }
    Ok(())
}

/// `h = sum_i mu_i D_i V_i`, the vector with `f(x) = h^T W x`.
pub fn effective_head<T: Real>(mask: &DMatrix<T>, mu: &DVector<T>, v: &DMatrix<T>) -> DVector<T> {
    mask.component_mul(v).tr_mul(mu)
}

/// Effective linear predictor `g = W^T h`.
pub fn effective_map<T: Real>(w: &DMatrix<T>, mask: &DMatrix<T>, mu: &DVector<T>, v: &DMatrix<T>) -> DVector<T> {
    w.tr_mul(&effective_head(mask, mu, v))
}

/// Bernoulli(`alpha`) mask of shape `q x p`.
pub fn bernoulli_mask<T: Real>(q: usize, p: usize, alpha: f64, rng: &mut RngStream) -> DMatrix<T> {
    use rand::Rng;
    let mut m = DMatrix::zeros(q, p);
    for v in m.iter_mut() {
        if rng.random_bool(alpha) {
            *v = T::one();
        }
    }
    m
}

fn masked_inputs<T: Real>(
    config: &McConfig,
    alpha: f64,
    scale: LastLayerScale,
    q: usize,
    rng: &mut RngStream,
) -> (DMatrix<T>, DMatrix<T>, DMatrix<T>, DVector<T>) {
    let (x, w) = draw_inputs_and_features::<T>(&config.geometry, rng);
    let mask = bernoulli_mask(q, config.geometry.p(), alpha, rng);
    let mu = gaussian_vector(q, scale.std(&config.geometry, q), rng);
    (x, w, mask, mu)
}

fn require_q(config: &McConfig, alpha: f64) -> Result<usize> {
    config.require_ridge()?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(domain("mc_masked_risk", "alpha must lie in [0, 1]"));
    }
    config
        .geometry
        .q()
        .ok_or_else(|| Error::Config("masked model needs q (second hidden width)".into()))
}

/// Monte Carlo decomposition of the masked model at density `alpha`.
///
/// Each trial draws `X`, `W`, the mask and `mu` in that order; `theta` and the
/// label noise are integrated out exactly through the equivalent features
/// `Sigma^{1/2} W`. The split between bias and clean variance is a finite-`q`
/// attribution; the risk and the noise variance are exact in expectation.
pub fn mc_masked_risk_with(config: &McConfig, alpha: f64, scale: LastLayerScale) -> Result<McDecomposition> {
    let q = require_q(config, alpha)?;
    let responses = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = derive_trial_rng(config.master_seed, t as u64);
            let (x, w, mask, mu) = masked_inputs::<f64>(config, alpha, scale, q, &mut rng);
            let root = mask_gram(&mask, &mu).map(f64::sqrt);
            let p_feat = DMatrix::from_fn(w.nrows(), w.ncols(), |j, k| root[j] * w[(j, k)]);
            let ops = ridge_operators(&p_feat, &(&x * x.transpose()), config.hyper.lambda())?;
            Ok(TrialResponse {
                b: to_f64_matrix(&ops.b),
                a_fro_sq: ops.a_fro_sq,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(&responses, config))
}

/// [`mc_masked_risk_with`] at the default `mu ~ N(0, 1/q)` scaling.
pub fn mc_masked_risk(config: &McConfig, alpha: f64) -> Result<McDecomposition> {
    mc_masked_risk_with(config, alpha, LastLayerScale::InverseQ)
}

/// Fully sampled masked risk: draws `theta` and noise, fits `V_hat` with
/// [`masked_fit`] and scores `||g - theta||^2 / d`. Returns `(mean, standard error)`.
pub fn mc_masked_sampled_risk(config: &McConfig, alpha: f64, scale: LastLayerScale) -> Result<(f64, f64)> {
    let q = require_q(config, alpha)?;
    let d = config.geometry.d();
    let risks = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = derive_trial_rng(config.master_seed, t as u64);
            let data = gen_dataset::<f64, _>(&config.geometry, config.hyper.sigma_sq(), &mut rng);
            let w: DMatrix<f64> = gaussian_matrix(config.geometry.p(), d, 1.0 / (d as f64).sqrt(), &mut rng);
            let mask = bernoulli_mask(q, config.geometry.p(), alpha, &mut rng);
            let mu = gaussian_vector(q, scale.std(&config.geometry, q), &mut rng);
            let v = masked_fit(&w, &data.x, &data.y, &mask, &mu, config.hyper.lambda())?;
            Ok((effective_map(&w, &mask, &mu, &v) - &data.theta).norm_squared() / d as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = risks.len() as f64;
    let mean = risks.iter().sum::<f64>() / k;
    let var = risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok((mean, (var / k).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{self, CleanVarianceForm};
    use crate::simulator::mc::mc_decomposition;
    use crate::simulator::ridge::rf_ridge;
    use crate::types::HyperParams;
    use approx::assert_relative_eq;

    #[allow(clippy::type_complexity)]
    fn small(d: usize, n: usize, p: usize, q: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let mut rng = derive_trial_rng(seed, 0);
        let x = gaussian_matrix(d, n, 1.0, &mut rng);
        let w = gaussian_matrix(p, d, 1.0, &mut rng);
        let y = gaussian_vector(n, 1.0, &mut rng);
        let mask = bernoulli_mask(q, p, 0.6, &mut rng);
        let mu = gaussian_vector(q, 1.0, &mut rng);
        (w, x, y, mask, mu)
    }

    /// Ridge on the vectorized design `Z[k, i p + j] = mu_i M_ij F_jk`,
    /// solved by LU on the `qp x qp` normal equations.
    fn vectorized_oracle(w: &DMatrix<f64>, x: &DMatrix<f64>, y: &DVector<f64>, mask: &DMatrix<f64>, mu: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
        let f = w * x;
        let (q, p, n) = (mask.nrows(), w.nrows(), x.ncols());
        let z = DMatrix::from_fn(n, q * p, |k, c| {
            let (i, j) = (c / p, c % p);
            mu[i] * mask[(i, j)] * f[(j, k)]
        });
        let normal = z.tr_mul(&z) + DMatrix::identity(q * p, q * p) * lambda;
        let vec = normal.lu().solve(&z.tr_mul(y)).unwrap();
        DMatrix::from_fn(q, p, |i, j| vec[i * p + j])
    }

    #[test]
    fn matches_vectorized_ridge_on_both_routes() {
        // n > p takes the p x p route, n <= p the n x n route
        for (d, n, p, q, seed) in [(3, 6, 4, 3, 1), (3, 3, 5, 2, 2)] {
            let (w, x, y, mask, mu) = small(d, n, p, q, seed);
            let v = masked_fit(&w, &x, &y, &mask, &mu, 0.7).unwrap();
            assert_relative_eq!(v, vectorized_oracle(&w, &x, &y, &mask, &mu, 0.7), epsilon = 1e-8);
        }
    }

    #[test]
    fn full_mask_single_head_is_rf_ridge() {
        let (w, x, y, _, _) = small(4, 9, 3, 1, 3);
        let mask = DMatrix::from_element(1, 3, 1.0);
        let mu = DVector::from_element(1, 1.0);
        let v = masked_fit(&w, &x, &y, &mask, &mu, 0.5).unwrap();
        let beta = rf_ridge(&w, &x, &y, 0.5).unwrap();
        assert_relative_eq!(v.row(0).transpose(), beta, epsilon = 1e-10);
    }

    #[test]
    fn empty_mask_gives_zero_predictor() {
        let (w, x, y, _, mu) = small(3, 6, 4, 3, 4);
        let mask = DMatrix::zeros(3, 4);
        let v = masked_fit(&w, &x, &y, &mask, &mu, 1.0).unwrap();
        assert!(v.iter().all(|&e| e == 0.0));
        assert!(effective_map(&w, &mask, &mu, &v).iter().all(|&e| e == 0.0));
    }

    #[test]
    fn rejects_non_binary_mask() {
        let (w, x, y, mut mask, mu) = small(3, 6, 4, 3, 5);
        mask[(0, 0)] = 0.5;
        assert!(masked_fit(&w, &x, &y, &mask, &mu, 1.0).is_err());
    }

    #[test]
    fn effective_map_matches_equivalent_features() {
        let (w, x, y, mask, mu) = small(4, 10, 6, 5, 6);
        let lambda = 0.8;
        let v = masked_fit(&w, &x, &y, &mask, &mu, lambda).unwrap();
        let root = mask_gram(&mask, &mu).map(f64::sqrt);
        let pf = DMatrix::from_fn(6, 4, |j, k| root[j] * w[(j, k)]);
        let ops = ridge_operators(&pf, &(&x * x.transpose()), lambda).unwrap();
        assert_relative_eq!(effective_map(&w, &mask, &mu, &v), &ops.s * &x * &y, epsilon = 1e-10);
    }

    #[allow(clippy::too_many_arguments)]
    fn config(d: usize, rho: f64, gamma: f64, kappa: f64, lambda0: f64, sigma0_sq: f64, trials: usize, seed: u64) -> McConfig {
        let g = ModelGeometry::from_ratios(d, rho, gamma).unwrap().with_q((kappa * d as f64).round() as usize).unwrap();
        let h = HyperParams::new(&g, lambda0, sigma0_sq, 1.0).unwrap();
        McConfig::new(g, h, trials, seed).unwrap()
    }

    #[test]
    fn requires_q() {
        let g = ModelGeometry::new(4, 32, 4).unwrap();
        let h = HyperParams::new(&g, 0.1, 1.0, 1.0).unwrap();
        assert!(mc_masked_risk(&McConfig::new(g, h, 4, 0).unwrap(), 0.5).is_err());
    }

    #[test]
    fn zero_density_is_null_predictor() {
        let m = mc_masked_risk(&config(16, 8.0, 1.0, 4.0, 0.1, 1.0, 4, 1), 0.0).unwrap();
        assert_eq!(m.decomposition.risk, 1.0);
        assert_eq!(m.decomposition.var_noise, 0.0);
    }

    #[test]
    fn full_density_matches_two_layer() {
        let c = config(32, 16.0, 1.0, 8.0, 0.1, 0.64, 40, 2);
        let masked = mc_masked_risk(&c, 1.0).unwrap();
        let plain = mc_decomposition(&c).unwrap();
        assert!((masked.decomposition.risk - plain.decomposition.risk).abs() < 0.05);
    }

    #[test]
    fn pruning_tracks_substituted_ridge() {
        let c = config(48, 32.0, 1.0, 4.0, 0.05, 0.64, 30, 3);
        let m = mc_masked_risk(&c, 0.25).unwrap();
        let a = analytic::pruned_decomposition(0.05, 1.0, 0.25, 0.64, CleanVarianceForm::Corrected).unwrap();
        assert!((m.decomposition.risk - a.risk).abs() < 0.05, "{} vs {}", m.decomposition.risk, a.risk);
    }

    #[test]
    fn inverse_d_scaling_tracks_variant() {
        let c = config(32, 32.0, 1.0, 2.0, 0.05, 0.64, 30, 4);
        let m = mc_masked_risk_with(&c, 0.5, LastLayerScale::InverseD).unwrap();
        let a = analytic::variant_decomposition(0.05, 1.0, 2.0, 0.5, 0.64, CleanVarianceForm::Corrected).unwrap();
        assert!((m.decomposition.risk - a.risk).abs() < 0.05, "{} vs {}", m.decomposition.risk, a.risk);
    }

    #[test]
    fn sampled_risk_agrees_with_integrated_risk() {
        let c = config(12, 8.0, 1.0, 4.0, 0.2, 0.5, 300, 5);
        let m = mc_masked_risk(&c, 0.5).unwrap();
        let (risk, se) = mc_masked_sampled_risk(&c, 0.5, LastLayerScale::InverseQ).unwrap();
        let combined = (se * se + m.se_risk * m.se_risk).sqrt();
        assert!((risk - m.decomposition.risk).abs() <= 3.0 * combined, "{risk} +- {se} vs {}", m.decomposition.risk);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn any_small_shape_matches_vectorized_ridge(
            d in 1usize..5, n in 1usize..8, p in 1usize..6, q in 1usize..4,
            lambda in 0.05f64..5.0, seed in 0u64..1000,
        ) {
            let (w, x, y, mask, mu) = small(d, n, p, q, seed);
            let v = masked_fit(&w, &x, &y, &mask, &mu, lambda).unwrap();
            let oracle = vectorized_oracle(&w, &x, &y, &mask, &mu, lambda);
            proptest::prop_assert!((v - oracle).amax() <= 1e-8);
        }
    }
}

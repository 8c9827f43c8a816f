//! Shared domain types: model dimensions, hyperparameters and the risk
//! decomposition triple.

use num_traits::Float;

use crate::error::{Error, Result};

/// Dimensions of the random-feature model.
///
/// `d` is the input dimension, `n` the number of training examples, `p` the
/// hidden width and `q` the optional second hidden width of the masked model.
/// Ratios are always recomputed from the integer fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelGeometry {
    d: usize,
    n: usize,
    p: usize,
    q: Option<usize>,
}

impl ModelGeometry {
    pub fn new(d: usize, n: usize, p: usize) -> Result<Self> {
        if d == 0 || n == 0 || p == 0 {
            return Err(Error::Config(format!(
                "geometry needs d, n, p >= 1 (got d={d}, n={n}, p={p})"
            )));
        }
        Ok(Self { d, n, p, q: None })
    }

    /// Builds a geometry from ratios, rounding `p = gamma*d` and `n = rho*d`
    /// to the nearest integer (at least 1).
    pub fn from_ratios(d: usize, rho: f64, gamma: f64) -> Result<Self> {
        if !(rho > 0.0 && gamma > 0.0) {
            return Err(Error::Config(format!(
                "ratios must be positive (rho={rho}, gamma={gamma})"
            )));
        }
        let n = ((rho * d as f64).round() as usize).max(1);
        let p = ((gamma * d as f64).round() as usize).max(1);
        Self::new(d, n, p)
    }

    pub fn with_q(mut self, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::Config("masked model needs q >= 1".into()));
        }
        self.q = Some(q);
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn q(&self) -> Option<usize> {
        self.q
    }

    pub fn gamma(&self) -> f64 {
        self.p as f64 / self.d as f64
    }
    pub fn rho(&self) -> f64 {
        self.n as f64 / self.d as f64
    }
    pub fn kappa(&self) -> Option<f64> {
        self.q.map(|q| q as f64 / self.d as f64)
    }
}

/// Scaled hyperparameters together with the raw values they induce for a
/// particular geometry (`lambda = rho * lambda0`, `sigma_sq = rho * sigma0_sq`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    lambda0: f64,
    sigma0_sq: f64,
    alpha: f64,
    lambda: f64,
    sigma_sq: f64,
}

impl HyperParams {
    pub fn new(geometry: &ModelGeometry, lambda0: f64, sigma0_sq: f64, alpha: f64) -> Result<Self> {
        if !(lambda0 >= 0.0 && lambda0.is_finite()) {
            return Err(Error::Config(format!("lambda0 must be finite and >= 0, got {lambda0}")));
        }
        if !(sigma0_sq >= 0.0 && sigma0_sq.is_finite()) {
            return Err(Error::Config(format!("sigma0_sq must be finite and >= 0, got {sigma0_sq}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let rho = geometry.rho();
        Ok(Self {
            lambda0,
            sigma0_sq,
            alpha,
            lambda: rho * lambda0,
            sigma_sq: rho * sigma0_sq,
        })
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }
    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    /// Raw ridge parameter used by the finite-size solvers.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    /// Raw label-noise variance used by the finite-size simulator.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }
}

/// Squared bias, clean variance, noise variance and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition<T> {
    pub bias_sq: T,
    pub var_clean: T,
    pub var_noise: T,
    pub risk: T,
}

impl<T: Float> Decomposition<T> {
    /// Assembles a decomposition whose risk is the sum of the three parts.
    pub fn from_parts(bias_sq: T, var_clean: T, var_noise: T) -> Self {
        Self {
            bias_sq,
            var_clean,
            var_noise,
            risk: bias_sq + var_clean + var_noise,
        }
    }

    /// The null predictor: everything is bias.
    pub fn null_predictor() -> Self {
        Self::from_parts(T::one(), T::zero(), T::zero())
    }

    pub fn total_variance(&self) -> T {
        self.var_clean + self.var_noise
    }

    pub fn map<U>(self, f: impl Fn(T) -> U) -> Decomposition<U> {
        Decomposition {
            bias_sq: f(self.bias_sq),
            var_clean: f(self.var_clean),
            var_noise: f(self.var_noise),
            risk: f(self.risk),
        }
    }
}

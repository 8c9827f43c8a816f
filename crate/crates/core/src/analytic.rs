//! Closed-form asymptotic bias-variance expressions for random-feature ridge
//! regression in the `n/d -> inf`, `p/d = gamma` limit.
//!
//! All functions take the scaled ridge parameter `lambda0` and the width ratio
//! `gamma`. The pruned and q/d variants are substitutions of `lambda0`.
//!
//! The expressions are evaluated in rationalized forms that avoid the
//! cancellation of the textbook forms when `lambda0` is large (which is the
//! regime reached by heavy pruning). The direct forms are used by the tests
//! as a cross-check.

use std::fmt;
use std::str::FromStr;

use num_traits::Float;

use crate::error::{domain, Error, Result};
use crate::types::Decomposition;

const RADICAND_SLACK: f64 = 1e-12;

/// Which expression to use for the clean variance.
///
/// * `Literal`: the leading term `Phi1(l,g) / (2 Phi2(l,g))` on the `gamma <= 1`
///   branch, `Phi1(l,1/g) / (2 Phi2(l,1/g))` on the `gamma > 1` branch, exactly
///   as commonly printed. Goes negative (e.g. -0.9375 at `(0, 0.25)`).
/// * `GammaRescaled`: the literal form with each leading term divided by its
///   branch's gamma argument. Nonnegative, and correct at `lambda0 = 0`, but it
///   disagrees with simulation once `lambda0 > 0`.
/// * `Corrected` (default): `Phi1/(2 Phi2) - (gamma-1)/2 - Phi3^2/4` for every
///   `gamma`, which equals `E||B~||^2/d - (1 - Phi3/2)^2` and matches both the
///   Marchenko-Pastur quadrature and the Monte Carlo simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CleanVarianceForm {
    Literal,
    GammaRescaled,
    #[default]
    Corrected,
}

impl CleanVarianceForm {
    pub fn as_str(&self) -> &'static str {
        match self {
            CleanVarianceForm::Literal => "literal",
            CleanVarianceForm::GammaRescaled => "gamma-rescaled",
            CleanVarianceForm::Corrected => "corrected",
        }
    }
}

impl fmt::Display for CleanVarianceForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CleanVarianceForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "gamma-rescaled" => Ok(Self::GammaRescaled),
            "corrected" => Ok(Self::Corrected),
            other => Err(Error::Config(format!(
                "unknown clean-variance form '{other}' (expected literal, gamma-rescaled or corrected)"
            ))),
        }
    }
}

/// The three auxiliary quantities `Phi1`, `Phi2`, `Phi3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phi<T> {
    pub phi1: T,
    pub phi2: T,
    pub phi3: T,
}

#[inline]
fn c<T: Float>(x: f64) -> T {
    T::from(x).expect("constant representable in scalar type")
}

fn check_inputs<T: Float>(op: &'static str, lambda0: T, gamma: T) -> Result<()> {
    if !(lambda0 >= T::zero()) || !lambda0.is_finite() {
        return Err(domain(op, format!("lambda0 must be finite and >= 0, got {:?}", lambda0.to_f64())));
    }
    if !(gamma >= T::zero()) || !gamma.is_finite() {
        return Err(domain(op, format!("gamma must be finite and >= 0, got {:?}", gamma.to_f64())));
    }
    Ok(())
}

fn check_positive_gamma<T: Float>(op: &'static str, gamma: T) -> Result<()> {
    if gamma > T::zero() {
        Ok(())
    } else {
        Err(domain(op, "gamma must be > 0"))
    }
}

/// `sqrt((l+1)^2 + 2(l-1)g + g^2)`, rejecting a radicand below `-1e-12`.
fn phi2<T: Float>(op: &'static str, lambda0: T, gamma: T) -> Result<T> {
    let one = T::one();
    let radicand = (lambda0 + one).powi(2) + c::<T>(2.0) * (lambda0 - one) * gamma + gamma * gamma;
    if radicand < -c::<T>(RADICAND_SLACK) {
        return Err(domain(op, format!("negative radicand {:?}", radicand.to_f64())));
    }
    Ok(radicand.max(T::zero()).sqrt())
}

/// `Phi3 = Phi2 - (l + g - 1)`, rationalized as `4l / (Phi2 + l + g - 1)` when
/// the subtraction would cancel.
fn phi3_from<T: Float>(lambda0: T, gamma: T, phi2: T) -> T {
    let shift = lambda0 + gamma - T::one();
    if shift > T::zero() {
        c::<T>(4.0) * lambda0 / (phi2 + shift)
    } else {
        phi2 - shift
    }
}

pub fn phi<T: Float>(lambda0: T, gamma: T) -> Result<Phi<T>> {
    check_inputs("phi", lambda0, gamma)?;
    let one = T::one();
    let phi1 = lambda0 * (gamma + one) + (gamma - one).powi(2);
    let phi2 = phi2("phi", lambda0, gamma)?;
    let phi3 = phi3_from(lambda0, gamma, phi2);
    Ok(Phi { phi1, phi2, phi3 })
}

/// Asymptotic squared bias `Phi3^2 / 4`.
pub fn bias_squared<T: Float>(lambda0: T, gamma: T) -> Result<T> {
    let p = phi(lambda0, gamma)?;
    Ok(p.phi3 * p.phi3 / c(4.0))
}

/// Asymptotic clean variance in the selected form.
pub fn variance_clean<T: Float>(lambda0: T, gamma: T, form: CleanVarianceForm) -> Result<T> {
    check_inputs("variance_clean", lambda0, gamma)?;
    check_positive_gamma("variance_clean", gamma)?;
    match form {
        CleanVarianceForm::Corrected => variance_clean_corrected(lambda0, gamma),
        CleanVarianceForm::Literal => variance_clean_branched(lambda0, gamma, false),
        CleanVarianceForm::GammaRescaled => variance_clean_branched(lambda0, gamma, true),
    }
}

fn variance_clean_branched<T: Float>(lambda0: T, gamma: T, rescale: bool) -> Result<T> {
    let one = T::one();
    let two = c::<T>(2.0);
    let bias = bias_squared(lambda0, gamma)?;
    // the leading term uses gamma on the lower branch, 1/gamma on the upper one
    let arg = if gamma <= one { gamma } else { one / gamma };
    let p = phi(lambda0, arg)?;
    let lead = if p.phi2 == T::zero() {
        // only at (0, 1), where Phi1 / Phi2 -> |arg - 1| = 0
        T::zero()
    } else {
        p.phi1 / (two * p.phi2)
    };
    let lead = if rescale { lead / arg } else { lead };
    let middle = if gamma <= one {
        (one - gamma) * (one - two * gamma) / (two * gamma)
    } else {
        (gamma - one) / two
    };
    Ok(lead - middle - bias)
}

/// `(c0 + c1 Phi2) / (4 Phi2)` with
/// `c0 = 2(g^3 + 3g^2 l - 2g^2 + 3g l^2 - g l + g + l^3 + l^2)` and
/// `c1 = -2(g^2 + 2 g l - g + l^2)`; `c0^2 - c1^2 Phi2^2 = 16 g l^2` supplies
/// the rationalized form when `c1 < 0`.
fn variance_clean_corrected<T: Float>(lambda0: T, gamma: T) -> Result<T> {
    let (l, g) = (lambda0, gamma);
    let one = T::one();
    let two = c::<T>(2.0);
    let three = c::<T>(3.0);
    let u = phi2("variance_clean", l, g)?;
    if u == T::zero() {
        return Ok(T::zero());
    }
    let c0 = two * (g * (g - one).powi(2) + three * g * g * l + three * g * l * l - g * l + l * l * l + l * l);
    let c1 = -two * (g * g + two * g * l - g + l * l);
    let value = if c1 >= T::zero() {
        (c0 + c1 * u) / (c::<T>(4.0) * u)
    } else {
        c::<T>(4.0) * g * l * l / (u * (c0 - c1 * u))
    };
    Ok(value)
}

/// Asymptotic noise variance
/// `(s/2) (g + 2l + 1 - (g^2 + (3l-2)g + 2l^2 + 3l + 1) / sqrt(g^2 + (2l-2)g + l^2 + 2l + 1))`.
pub fn variance_noise<T: Float>(lambda0: T, gamma: T, sigma0_sq: T) -> Result<T> {
    check_inputs("variance_noise", lambda0, gamma)?;
    if !(sigma0_sq >= T::zero()) || !sigma0_sq.is_finite() {
        return Err(domain("variance_noise", "sigma0_sq must be finite and >= 0"));
    }
    Ok(sigma0_sq * noise_bracket(lambda0, gamma)? / c(2.0))
}

/// The bracket of the noise variance, i.e. `2 E||B~||^2 / d`.
///
/// With `u = Phi2`, `a = l + g - 1`: bracket `= (A - B u) / (u (u + a))` where
/// `A = 2((g-1)^2 + l(g + 2l + 3))`, `B = 2(2l - g + 1)` and
/// `A^2 - B^2 u^2 = 16 g l ((g-1)^2 + 2l(g+1))`.
fn noise_bracket<T: Float>(lambda0: T, gamma: T) -> Result<T> {
    let (l, g) = (lambda0, gamma);
    let one = T::one();
    let two = c::<T>(2.0);
    let u = phi2("variance_noise", l, g)?;
    if u == T::zero() {
        // (0, 1): the ridgeless limit gamma + 1 - |gamma - 1| = 2
        return Ok(two);
    }
    let a_coef = two * ((g - one).powi(2) + l * (g + two * l + c(3.0)));
    let b_coef = two * (two * l - g + one);
    let q = (g - one).powi(2) + two * l * (g + one);
    let shift = l + g - one;
    if shift >= T::zero() {
        let numerator = if b_coef <= T::zero() {
            a_coef - b_coef * u
        } else {
            c::<T>(16.0) * g * l * q / (a_coef + b_coef * u)
        };
        Ok(numerator / (u * (u + shift)))
    } else {
        // u + a = 4l / (u - a); here B > 0, so the 16 g l q form applies and l cancels
        let t = u - shift;
        Ok(c::<T>(4.0) * g * q * t / ((a_coef + b_coef * u) * u))
    }
}

/// Bias, clean variance and noise variance with their sum.
pub fn decomposition<T: Float>(
    lambda0: T,
    gamma: T,
    sigma0_sq: T,
    form: CleanVarianceForm,
) -> Result<Decomposition<T>> {
    check_positive_gamma("decomposition", gamma)?;
    Ok(Decomposition::from_parts(
        bias_squared(lambda0, gamma)?,
        variance_clean(lambda0, gamma, form)?,
        variance_noise(lambda0, gamma, sigma0_sq)?,
    ))
}

/// Masked three-layer model with Bernoulli(alpha) masks: the two-layer
/// decomposition at `lambda0 / alpha`.
///
/// `alpha = 0` is rejected; its limit is [`Decomposition::null_predictor`].
pub fn pruned_decomposition<T: Float>(
    lambda0: T,
    gamma: T,
    alpha: T,
    sigma0_sq: T,
    form: CleanVarianceForm,
) -> Result<Decomposition<T>> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(domain("pruned_decomposition", format!("alpha must lie in (0, 1], got {:?}", alpha.to_f64())));
    }
    decomposition(lambda0 / alpha, gamma, sigma0_sq, form)
}

/// Masked model with last-layer variance `1/d` and `q/d = kappa`: the
/// two-layer decomposition at `lambda0 / (kappa alpha)`.
pub fn variant_decomposition<T: Float>(
    lambda0: T,
    gamma: T,
    kappa: T,
    alpha: T,
    sigma0_sq: T,
    form: CleanVarianceForm,
) -> Result<Decomposition<T>> {
    if !(kappa > T::zero()) || !kappa.is_finite() {
        return Err(domain("variant_decomposition", "kappa must be finite and > 0"));
    }
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(domain("variant_decomposition", "alpha must lie in (0, 1]"));
    }
    decomposition(lambda0 / (kappa * alpha), gamma, sigma0_sq, form)
}

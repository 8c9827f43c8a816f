//! Marchenko-Pastur quadrature: an independent route to the asymptotic
//! decomposition.
//!
//! With `eta = 1/gamma` and `c = gamma/lambda0`, the spectrum of
//! `Q = (d/p) W^T W` follows the Marchenko-Pastur law on `[eta_-, eta_+]`,
//! `eta_± = (1 ± sqrt(eta))^2`, with density `sqrt((eta_+ - x)(x - eta_-)) / (2 pi eta x)`
//! (plus an atom at zero when `eta > 1`, which contributes nothing here).
//! The ridge map `B~ = W^T (W W^T + lambda0 I)^{-1} W` has eigenvalues
//! `s(x) = c x / (1 + c x)`, so
//!
//! * `m1 = ∫ s dF` gives `E B~ = m1 I` and `Bias^2 = (1 - m1)^2`,
//! * `m2 = ∫ s^2 dF` gives `Variance_noise = sigma0^2 m2`,
//! * `Variance_clean = m2 - m1^2`.
//!
//! The substitution `x = m + r cos(theta)` turns the square-root weight into
//! `r^2 sin^2(theta)`, removing the endpoint singularity; the smooth integrand
//! is then integrated with composite Gauss-Legendre, doubling the panel count
//! until successive estimates agree.

use num_traits::{Float, FloatConst};

use crate::error::{domain, Error, Result};
use crate::types::Decomposition;

/// Options for the adaptive composite Gauss-Legendre rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Required absolute agreement between successive panel doublings.
    pub abs_tol: f64,
    /// Once `abs_tol` is met, keep doubling until the relative change drops
    /// below this (best effort, never an error).
    pub rel_target: f64,
    pub order: usize,
    pub max_panels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_target: 1e-13,
            order: 16,
            max_panels: 1 << 12,
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Legendre order must be >= 1");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Composite Gauss-Legendre of `f` on `[a, b]` with `panels` equal panels.
fn composite<T: Float, F: Fn(T) -> [T; 2]>(f: &F, a: T, b: T, panels: usize, nodes: &[T], weights: &[T]) -> [T; 2] {
    let two = T::one() + T::one();
    let h = (b - a) / T::from(panels).unwrap();
    let mut acc = [T::zero(); 2];
    for k in 0..panels {
        let lo = a + h * T::from(k).unwrap();
        let mid = lo + h / two;
        let mut panel = [T::zero(); 2];
        for (&x, &w) in nodes.iter().zip(weights) {
            let v = f(mid + h / two * x);
            panel[0] = panel[0] + w * v[0];
            panel[1] = panel[1] + w * v[1];
        }
        acc[0] = acc[0] + panel[0] * h / two;
        acc[1] = acc[1] + panel[1] * h / two;
    }
    acc
}

/// The first two spectral moments `(m1, m2)` of the ridge map.
pub fn mp_moments<T: Float + FloatConst>(lambda0: T, gamma: T, opts: &QuadratureOptions) -> Result<(T, T)> {
    if !(lambda0 > T::zero()) || !lambda0.is_finite() {
        return Err(domain("mp_quadrature", "lambda0 must be finite and > 0"));
    }
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(domain("mp_quadrature", "gamma must be finite and > 0"));
    }
    let one = T::one();
    let two = one + one;
    let eta = one / gamma;
    let c = gamma / lambda0;
    let root = eta.sqrt();
    let upper = (one + root).powi(2);
    let lower = (one - root).powi(2);
    let mid = (upper + lower) / two;
    let half = (upper - lower) / two;
    let norm = one / (two * T::PI() * eta);

    // integrand in theta: r^2 sin^2(theta) * s(x)^k / x / (2 pi eta), k = 1, 2
    let integrand = |theta: T| -> [T; 2] {
        let x = mid + half * theta.cos();
        let weight = (half * theta.sin()).powi(2) * norm;
        // s(x)/x = c / (1 + c x), finite at x = 0
        let s_over_x = c / (one + c * x);
        let s = s_over_x * x;
        [weight * s_over_x, weight * s * s_over_x]
    };

    let (nodes, weights) = gauss_legendre(opts.order);
    let nodes: Vec<T> = nodes.into_iter().map(|x| T::from(x).unwrap()).collect();
    let weights: Vec<T> = weights.into_iter().map(|x| T::from(x).unwrap()).collect();
    let abs_tol = T::from(opts.abs_tol).unwrap();
    let rel_target = T::from(opts.rel_target).unwrap();

    let mut panels = 1;
    let mut prev = composite(&integrand, T::zero(), T::PI(), panels, &nodes, &weights);
    let mut met = false;
    let mut last_change = T::infinity();
    while panels < opts.max_panels {
        panels *= 2;
        let next = composite(&integrand, T::zero(), T::PI(), panels, &nodes, &weights);
        last_change = (next[0] - prev[0]).abs().max((next[1] - prev[1]).abs());
        prev = next;
        if last_change <= abs_tol {
            met = true;
            let scale = next[0].abs().min(next[1].abs());
            if last_change <= rel_target * scale || panels >= 64 {
                break;
            }
        }
    }
    if !met {
        return Err(Error::Convergence {
            tol: opts.abs_tol,
            last_change: last_change.to_f64().unwrap_or(f64::NAN),
            panels,
        });
    }
    Ok((prev[0], prev[1]))
}

/// Noise variance as `sigma0^2 ∫ s(x)^2 dF(x)`.
pub fn mp_variance_noise_quadrature<T: Float + FloatConst>(lambda0: T, gamma: T, sigma0_sq: T) -> Result<T> {
    if !(sigma0_sq >= T::zero()) || !sigma0_sq.is_finite() {
        return Err(domain("mp_quadrature", "sigma0_sq must be finite and >= 0"));
    }
    let (_, m2) = mp_moments(lambda0, gamma, &QuadratureOptions::default())?;
    Ok(sigma0_sq * m2)
}

/// Full decomposition from the two spectral moments.
pub fn mp_decomposition_quadrature<T: Float + FloatConst>(lambda0: T, gamma: T, sigma0_sq: T) -> Result<Decomposition<T>> {
    if !(sigma0_sq >= T::zero()) || !sigma0_sq.is_finite() {
        return Err(domain("mp_quadrature", "sigma0_sq must be finite and >= 0"));
    }
    let (m1, m2) = mp_moments(lambda0, gamma, &QuadratureOptions::default())?;
    let one = T::one();
    Ok(Decomposition::from_parts((one - m1).powi(2), m2 - m1 * m1, sigma0_sq * m2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{self, CleanVarianceForm};
    use approx::assert_relative_eq;

    /// Composite Simpson on the raw x variable with the square-root weight
    /// handled by a sqrt substitution at both ends: a second, cruder rule for
    /// self-consistency of the quadrature.
    fn simpson_m2(lambda0: f64, gamma: f64) -> f64 {
        let eta = 1.0 / gamma;
        let c = gamma / lambda0;
        let (lo, hi) = ((1.0 - eta.sqrt()).powi(2), (1.0 + eta.sqrt()).powi(2));
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        // x = mid + half * sin(phi), phi in [-pi/2, pi/2]: weight sqrt(..) dx = half^2 cos^2(phi) dphi
        let n = 20_000;
        let h = std::f64::consts::PI / n as f64;
        let f = |phi: f64| {
            let x = mid + half * phi.sin();
            let s = c * x / (1.0 + c * x);
            (half * phi.cos()).powi(2) * s * (c / (1.0 + c * x)) / (2.0 * std::f64::consts::PI * eta)
        };
        let mut acc = f(-std::f64::consts::FRAC_PI_2) + f(std::f64::consts::FRAC_PI_2);
        for i in 1..n {
            let phi = -std::f64::consts::FRAC_PI_2 + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(phi);
        }
        acc * h / 3.0
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(16);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
        // degree 30 monomial: ∫ x^30 = 2/31
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert_relative_eq!(v, 2.0 / 31.0, max_relative = 1e-12);
        let (x1, w1) = gauss_legendre(1);
        assert_eq!(x1, vec![0.0]);
        assert_relative_eq!(w1[0], 2.0);
    }

    #[test]
    fn density_has_unit_mass_for_wide_models() {
        // For gamma >= 1 there is no atom, so ∫ dF = 1; check through m1 at c -> inf.
        let (m1, m2) = mp_moments(1e-9_f64, 2.0, &QuadratureOptions::default()).unwrap();
        assert_relative_eq!(m1, 1.0, epsilon = 1e-6);
        assert_relative_eq!(m2, 1.0, epsilon = 1e-6);
        // For gamma < 1 the continuous part carries mass gamma.
        let (m1, _) = mp_moments(1e-9_f64, 0.25, &QuadratureOptions::default()).unwrap();
        assert_relative_eq!(m1, 0.25, epsilon = 1e-6);
    }

    #[test]
    fn anchor_value() {
        let v = mp_variance_noise_quadrature(0.1_f64, 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 0.615861, epsilon = 1e-6);
        assert_relative_eq!(v, simpson_m2(0.1, 1.0), max_relative = 1e-7);
    }

    #[test]
    fn zero_noise_gives_zero() {
        for g in [0.05, 1.0, 7.0] {
            assert_eq!(mp_variance_noise_quadrature(0.1_f64, g, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn rejects_ridgeless_and_bad_inputs() {
        assert!(mp_variance_noise_quadrature(0.0_f64, 1.0, 1.0).is_err());
        assert!(mp_variance_noise_quadrature(0.1_f64, 0.0, 1.0).is_err());
        assert!(mp_variance_noise_quadrature(0.1_f64, 1.0, -1.0).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadratureOptions { abs_tol: 1e-30, rel_target: 0.0, order: 2, max_panels: 8 };
        assert!(matches!(mp_moments(0.1_f64, 1.0, &opts), Err(Error::Convergence { .. })));
    }

    #[test]
    fn two_rules_agree() {
        for &(l, g) in &[(1.0, 2.0), (0.05, 0.5), (10.0, 0.05), (1e-3, 4.0)] {
            let gl = mp_variance_noise_quadrature(l, g, 1.0).unwrap();
            assert_relative_eq!(gl, simpson_m2(l, g), max_relative = 1e-6);
        }
    }

    #[test]
    fn agrees_with_closed_forms_on_verify_grid() {
        for &l in &[1e-3, 0.05, 0.1, 1.0, 10.0] {
            for &g in &[0.05, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0] {
                let closed = analytic::variance_noise(l, g, 1.0).unwrap();
                let quad = mp_variance_noise_quadrature(l, g, 1.0).unwrap();
                assert!((closed - quad).abs() / closed.max(1e-12) <= 1e-8, "({l},{g}): {closed} vs {quad}");
                let dq = mp_decomposition_quadrature(l, g, 1.0).unwrap();
                let dc = analytic::decomposition(l, g, 1.0, CleanVarianceForm::Corrected).unwrap();
                assert_relative_eq!(dq.bias_sq, dc.bias_sq, max_relative = 1e-8, epsilon = 1e-13);
                assert_relative_eq!(dq.var_clean, dc.var_clean, max_relative = 1e-7, epsilon = 1e-12);
            }
        }
    }
}

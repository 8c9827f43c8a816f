//! Parameter sweeps producing [`SweepRecord`] rows.
//!
//! Rows are ordered lexicographically by `lambda0`, `sigma0_sq`, `alpha`,
//! `gamma`, then source. Every Monte Carlo grid point uses the same master
//! seed, so neighbouring points share random numbers wherever their shapes
//! agree.

use rayon::prelude::*;

use rfvar::analytic::{self, CleanVarianceForm};
use rfvar::estimator::{split_estimate, split_noise_variance};
use rfvar::quadrature::mp_decomposition_quadrature;
use rfvar::simulator::{gen_dataset, mc_decomposition, mc_masked_risk_with, LastLayerScale, McConfig, McDecomposition};
use rfvar::{derive_trial_rng, Decomposition, Error, HyperParams, ModelGeometry, Result, Source, SweepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum KappaAxis {
    #[default]
    Unused,
    Fixed(f64),
    /// `kappa = gamma` at every grid point.
    TieToGamma,
}

impl KappaAxis {
    fn at(self, gamma: f64) -> Option<f64> {
        match self {
            KappaAxis::Unused => None,
            KappaAxis::Fixed(k) => Some(k),
            KappaAxis::TieToGamma => Some(gamma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McBudget {
    pub d: usize,
    pub rho: f64,
    pub trials: usize,
    pub seed: u64,
    /// `q / d` for the masked model when no kappa is given.
    pub q_ratio: f64,
}

impl Default for McBudget {
    fn default() -> Self {
        Self {
            d: 128,
            rho: 64.0,
            trials: 300,
            seed: 0,
            q_ratio: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub lambda0: Vec<f64>,
    pub sigma0_sq: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `None` sweeps the plain two-layer model.
    pub alpha: Option<Vec<f64>>,
    pub kappa: KappaAxis,
    pub sources: Vec<Source>,
    pub mc_budget: Option<McBudget>,
    pub clean_form: CleanVarianceForm,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Config("sweep needs at least one source".into()));
        }
        for (name, axis) in [("lambda0", &self.lambda0), ("sigma0_sq", &self.sigma0_sq), ("gamma", &self.gamma)] {
            if axis.is_empty() {
                return Err(Error::Config(format!("{name} axis is empty")));
            }
        }
        if matches!(&self.alpha, Some(a) if a.is_empty()) {
            return Err(Error::Config("alpha axis is empty".into()));
        }
        let needs_budget = self.sources.iter().any(|s| matches!(s, Source::Mc | Source::Estimator));
        if needs_budget != self.mc_budget.is_some() {
            return Err(Error::Config("Monte Carlo budget is required exactly when a simulated source is requested".into()));
        }
        Ok(())
    }

    fn masked(&self) -> bool {
        self.alpha.is_some() || self.kappa != KappaAxis::Unused
    }

    fn alphas(&self) -> Vec<f64> {
        self.alpha.clone().unwrap_or_else(|| vec![1.0])
    }

    /// Grid points in output order.
    fn points(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut pts = Vec::new();
        for &l in &self.lambda0 {
            for &s in &self.sigma0_sq {
                for &a in &self.alphas() {
                    for &g in &self.gamma {
                        pts.push((l, s, a, g));
                    }
                }
            }
        }
        pts
    }
}

fn asymptotic_point(source: Source, lambda0: f64, sigma0_sq: f64, alpha: f64, gamma: f64, kappa: Option<f64>, form: CleanVarianceForm) -> Result<Decomposition<f64>> {
    if alpha == 0.0 {
        return Ok(Decomposition::null_predictor());
    }
    // substitution lambda0 -> lambda0 / (kappa alpha) covers all three models
    let effective = lambda0 / (kappa.unwrap_or(1.0) * alpha);
    match source {
        Source::Analytic => match kappa {
            Some(k) => analytic::variant_decomposition(lambda0, gamma, k, alpha, sigma0_sq, form),
            None if alpha < 1.0 => analytic::pruned_decomposition(lambda0, gamma, alpha, sigma0_sq, form),
            None => analytic::decomposition(lambda0, gamma, sigma0_sq, form),
        },
        Source::Quadrature => mp_decomposition_quadrature(effective, gamma, sigma0_sq),
        _ => unreachable!("asymptotic_point called with a simulated source"),
    }
}

/// Analytic and quadrature rows.
pub fn run_analytic(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let sources: Vec<Source> = spec
        .sources
        .iter()
        .copied()
        .filter(|s| matches!(s, Source::Analytic | Source::Quadrature))
        .collect();
    let mut rows = Vec::new();
    for (l, s, a, g) in spec.points() {
        let kappa = spec.kappa.at(g);
        for &src in &sources {
            let dec = asymptotic_point(src, l, s, a, g, kappa, spec.clean_form)?;
            rows.push(SweepRecord::asymptotic(src, l, g, a, s, kappa, dec));
        }
    }
    Ok(rows)
}

fn mc_row(m: &McDecomposition, dec: Decomposition<f64>, alpha: f64, kappa: Option<f64>, seed: u64) -> SweepRecord {
    let g = &m.geometry;
    SweepRecord {
        source: Source::Mc,
        lambda0: m.hyper.lambda0(),
        gamma: g.gamma(),
        alpha,
        sigma0_sq: m.hyper.sigma0_sq(),
        kappa: kappa.unwrap_or(f64::NAN),
        d: g.d() as u64,
        n: g.n() as u64,
        p: g.p() as u64,
        trials: m.trials as u64,
        seed,
        bias_sq: dec.bias_sq,
        var_clean: dec.var_clean,
        var_noise: dec.var_noise,
        risk: dec.risk,
    }
}

/// Monte Carlo rows and their standard-error rows (same schema, same order).
///
/// With an alpha axis or a kappa the masked model is simulated; a kappa
/// switches the last layer to `mu ~ N(0, 1/d)` with `q = kappa d`.
pub fn run_mc(spec: &SweepSpec) -> Result<(Vec<SweepRecord>, Vec<SweepRecord>)> {
    spec.validate()?;
    let budget = spec.mc_budget.ok_or_else(|| Error::Config("mc needs a budget".into()))?;
    let mut rows = Vec::new();
    let mut se_rows = Vec::new();
    for (l, s, a, g) in spec.points() {
        let kappa = spec.kappa.at(g);
        let mut geometry = ModelGeometry::from_ratios(budget.d, budget.rho, g)?;
        let (q_ratio, scale) = match kappa {
            Some(k) => (k, LastLayerScale::InverseD),
            None => (budget.q_ratio, LastLayerScale::InverseQ),
        };
        if spec.masked() {
            geometry = geometry.with_q(((q_ratio * budget.d as f64).round() as usize).max(1))?;
        }
        let hyper = HyperParams::new(&geometry, l, s, a)?;
        let config = McConfig::new(geometry, hyper, budget.trials, budget.seed)?;
        let m = if spec.masked() {
            mc_masked_risk_with(&config, a, scale)?
        } else {
            mc_decomposition(&config)?
        };
        rows.push(mc_row(&m, m.decomposition, a, kappa, budget.seed));
        se_rows.push(mc_row(&m, m.standard_errors(), a, kappa, budget.seed));
    }
    Ok((rows, se_rows))
}

/// Split-estimator rows. The estimator cannot separate the two variance
/// terms, so `var_clean` holds the total variance and `var_noise` is NaN;
/// `trials` holds the number of splits.
pub fn run_estimator(spec: &SweepSpec, n_splits: usize, test_size: usize) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let budget = spec.mc_budget.ok_or_else(|| Error::Config("estimator needs a budget".into()))?;
    if spec.masked() {
        return Err(Error::Config("the split estimator runs on the two-layer model only".into()));
    }
    spec.points()
        .into_par_iter()
        .map(|(l, s, a, g)| {
            let geometry = ModelGeometry::from_ratios(budget.d, budget.rho, g)?;
            let hyper = HyperParams::new(&geometry, l, s, a)?;
            let mut rng = derive_trial_rng(budget.seed, 0);
            let data = gen_dataset(&geometry, split_noise_variance(&geometry, n_splits, s), &mut rng);
            let e = split_estimate(&data, n_splits, &geometry, &hyper, test_size, &mut rng)?;
            Ok(SweepRecord {
                source: Source::Estimator,
                lambda0: l,
                gamma: geometry.gamma(),
                alpha: a,
                sigma0_sq: s,
                kappa: f64::NAN,
                d: geometry.d() as u64,
                n: geometry.n() as u64,
                p: geometry.p() as u64,
                trials: n_splits as u64,
                seed: budget.seed,
                bias_sq: e.bias_sq_est,
                var_clean: e.variance_est,
                var_noise: f64::NAN,
                risk: e.avg_test_loss,
            })
        })
        .collect()
}

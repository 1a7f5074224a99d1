//! Maximum-likelihood fitting of the GEV and GPD families, percentile
//! bootstrap confidence intervals, and the Gumbel-limit likelihood-ratio test.
//!
//! All fits minimize the negative log-likelihood with Nelder-Mead in
//! standardized coordinates: location and log-scale are expressed relative to
//! a moment-based starting point, which makes the fit equivariant under
//! `sample * a + b`. Points outside the support score `+inf`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{GevParams, GpdParams};
use crate::optimize::{nelder_mead, NelderMeadOptions, NelderMeadResult};
use crate::rng::stream;
use crate::stats::{mean, quantile_sorted, std_sample};
use crate::{Error, Result};

/// Smallest sample the fits accept.
pub const MIN_FIT_N: usize = 20;

/// 95th percentile of the chi-squared distribution with one degree of freedom.
pub const CHI2_1DF_95: f64 = 3.841_458_820_694_124;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Shape values tried when the default start does not converge.
pub const MULTI_START_SHAPES: [f64; 5] = [-0.4, -0.1, 0.1, 0.4, 0.8];

/// Shapes at or below -1 make the likelihood unbounded at the upper
/// endpoint, so the search is confined to ξ > -1.
const MIN_SHAPE: f64 = -1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub min_samples: usize,
    pub max_evals: usize,
    pub tolerance: f64,
    /// Start the search here instead of the moment-based start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<FittedParams>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_samples: MIN_FIT_N,
            max_evals: 10_000,
            tolerance: 1e-10,
            start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gev,
    Gpd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedParams {
    Gev(GevParams),
    Gpd(GpdParams),
}

impl FittedParams {
    pub fn family(&self) -> Family {
        match self {
            FittedParams::Gev(_) => Family::Gev,
            FittedParams::Gpd(_) => Family::Gpd,
        }
    }

    pub fn xi(&self) -> f64 {
        match self {
            FittedParams::Gev(p) => p.xi,
            FittedParams::Gpd(p) => p.xi,
        }
    }

    /// Names of the free parameters, in the order of [`FittedParams::values`].
    pub fn names(&self) -> &'static [&'static str] {
        match self {
            FittedParams::Gev(_) => &["xi", "mu", "sigma"],
            FittedParams::Gpd(_) => &["xi", "sigma"],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            FittedParams::Gev(p) => vec![p.xi, p.mu, p.sigma],
            FittedParams::Gpd(p) => vec![p.xi, p.sigma],
        }
    }

    pub fn quantile(&self, prob: f64) -> Result<f64> {
        match self {
            FittedParams::Gev(p) => p.quantile(prob),
            FittedParams::Gpd(p) => p.quantile(prob),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            FittedParams::Gev(p) => p.cdf(x),
            FittedParams::Gpd(p) => p.cdf(x),
        }
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        match self {
            FittedParams::Gev(p) => p.logpdf(x),
            FittedParams::Gpd(p) => p.logpdf(x),
        }
    }

    pub fn log_likelihood(&self, sample: &[f64]) -> f64 {
        match self {
            FittedParams::Gev(p) => p.log_likelihood(sample),
            FittedParams::Gpd(p) => p.log_likelihood(sample),
        }
    }
}

/// Outcome of checking whether the ξ confidence interval straddles zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GumbelFlag {
    NotApplicable,
    XiCiExcludesZero,
    XiCiIncludesZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FittedParams,
    pub log_likelihood: f64,
    pub converged: bool,
    pub n_samples: usize,
    pub gumbel_flag: GumbelFlag,
    pub evaluations: usize,
}

impl FitResult {
    /// Records whether `ci_xi` contains zero.
    pub fn with_xi_interval(mut self, ci_xi: &ConfidenceInterval) -> Self {
        self.gumbel_flag = if ci_xi.contains(0.0) {
            GumbelFlag::XiCiIncludesZero
        } else {
            GumbelFlag::XiCiExcludesZero
        };
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_bootstrap: usize,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn overlaps(&self, other: &ConfidenceInterval) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }

    /// Percentile interval of `values` at `level`.
    pub fn percentile(values: &[f64], level: f64, n_bootstrap: usize) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let tail = (1.0 - level) / 2.0;
        Self {
            lower: quantile_sorted(&sorted, tail),
            upper: quantile_sorted(&sorted, 1.0 - tail),
            level,
            n_bootstrap,
        }
    }
}

fn validate_sample(sample: &[f64], min_samples: usize) -> Result<()> {
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if sample.len() < min_samples.max(2) {
        return Err(Error::TooFewSamples {
            got: sample.len(),
            min: min_samples.max(2),
        });
    }
    let first = sample[0];
    if sample.iter().all(|&x| x == first) {
        return Err(Error::DegenerateSample {
            n: sample.len(),
            value: first,
        });
    }
    Ok(())
}

fn nm_options(options: &FitOptions, dim: usize) -> NelderMeadOptions {
    NelderMeadOptions {
        max_evals: options.max_evals,
        tolerance: options.tolerance,
        initial_step: vec![0.1; dim],
    }
}

/// Runs the search from `start`; if that does not converge, retries from the
/// multi-start shapes and keeps the best converged optimum.
fn search<F>(objective: F, start: Vec<f64>, options: &FitOptions) -> NelderMeadResult
where
    F: Fn(&[f64]) -> f64,
{
    let opts = nm_options(options, start.len());
    let first = nelder_mead(&objective, &start, &opts);
    if first.converged {
        return first;
    }
    let mut best = first;
    for &xi0 in &MULTI_START_SHAPES {
        let mut s = start.clone();
        s[0] = xi0;
        let r = nelder_mead(&objective, &s, &opts);
        let better = match (r.converged, best.converged) {
            (true, false) => true,
            (false, true) => false,
            _ => r.f < best.f,
        };
        if better {
            best = r;
        }
    }
    best
}

/// Maximum-likelihood GEV fit of block maxima.
pub fn fit_gev_mle(sample: &[f64], options: &FitOptions) -> Result<FitResult> {
    validate_sample(sample, options.min_samples)?;
    let sigma0 = 6f64.sqrt() * std_sample(sample) / std::f64::consts::PI;
    let mu0 = mean(sample) - EULER_GAMMA * sigma0;

    let to_params = |t: &[f64]| GevParams {
        xi: t[0],
        mu: mu0 + sigma0 * t[1],
        sigma: sigma0 * t[2].exp(),
    };
    let objective = |t: &[f64]| {
        if t[0] <= MIN_SHAPE || !t.iter().all(|v| v.is_finite()) {
            return f64::INFINITY;
        }
        -to_params(t).log_likelihood(sample)
    };
    let start = match options.start {
        Some(FittedParams::Gev(p)) => vec![p.xi, (p.mu - mu0) / sigma0, (p.sigma / sigma0).ln()],
        Some(FittedParams::Gpd(_)) => {
            return Err(Error::InvalidArgument("GPD start for a GEV fit".into()))
        }
        None => vec![0.1, 0.0, 0.0],
    };
    let r = search(objective, start, options);
    Ok(FitResult {
        params: FittedParams::Gev(to_params(&r.x)),
        log_likelihood: -r.f,
        converged: r.converged,
        n_samples: sample.len(),
        gumbel_flag: GumbelFlag::NotApplicable,
        evaluations: r.evals,
    })
}

/// Maximum-likelihood fit of the two-parameter Gumbel model (GEV with ξ = 0).
pub fn fit_gumbel_mle(sample: &[f64], options: &FitOptions) -> Result<FitResult> {
    validate_sample(sample, options.min_samples)?;
    let sigma0 = 6f64.sqrt() * std_sample(sample) / std::f64::consts::PI;
    let mu0 = mean(sample) - EULER_GAMMA * sigma0;
    let to_params = |t: &[f64]| GevParams {
        xi: 0.0,
        mu: mu0 + sigma0 * t[0],
        sigma: sigma0 * t[1].exp(),
    };
    let objective = |t: &[f64]| -to_params(t).log_likelihood(sample);
    let opts = nm_options(options, 2);
    let r = nelder_mead(objective, &[0.0, 0.0], &opts);
    Ok(FitResult {
        params: FittedParams::Gev(to_params(&r.x)),
        log_likelihood: -r.f,
        converged: r.converged,
        n_samples: sample.len(),
        gumbel_flag: GumbelFlag::NotApplicable,
        evaluations: r.evals,
    })
}

/// Maximum-likelihood GPD fit of threshold exceedances with `u` held fixed.
///
/// The values are the raw exceedances (all `> u`); this is equivalent to
/// fitting the excesses `x - u` with location zero.
pub fn fit_gpd_mle(exceedances: &[f64], u: f64, options: &FitOptions) -> Result<FitResult> {
    if !u.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold must be finite, got {u}")));
    }
    if let Some(&bad) = exceedances.iter().find(|&&x| x.is_finite() && x <= u) {
        return Err(Error::ThresholdViolation {
            value: bad,
            threshold: u,
        });
    }
    validate_sample(exceedances, options.min_samples)?;
    let sigma0 = mean(exceedances) - u;

    let to_params = |t: &[f64]| GpdParams {
        xi: t[0],
        sigma: sigma0 * t[1].exp(),
        u,
    };
    let objective = |t: &[f64]| {
        if t[0] <= MIN_SHAPE || !t.iter().all(|v| v.is_finite()) {
            return f64::INFINITY;
        }
        -to_params(t).log_likelihood(exceedances)
    };
    let start = match options.start {
        Some(FittedParams::Gpd(p)) => vec![p.xi, (p.sigma / sigma0).ln()],
        Some(FittedParams::Gev(_)) => {
            return Err(Error::InvalidArgument("GEV start for a GPD fit".into()))
        }
        None => vec![0.1, 0.0],
    };
    let r = search(objective, start, options);
    Ok(FitResult {
        params: FittedParams::Gpd(to_params(&r.x)),
        log_likelihood: -r.f,
        converged: r.converged,
        n_samples: exceedances.len(),
        gumbel_flag: GumbelFlag::NotApplicable,
        evaluations: r.evals,
    })
}

/// Per-parameter percentile intervals from a bootstrap run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub names: Vec<String>,
    pub intervals: Vec<ConfidenceInterval>,
    /// Parameters of every successful replicate, in replicate order.
    pub replicates: Vec<FittedParams>,
    pub n_bootstrap: usize,
    pub n_failed: usize,
    pub level: f64,
}

impl BootstrapResult {
    pub fn interval(&self, name: &str) -> Option<&ConfidenceInterval> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.intervals[i])
    }

    pub fn xi(&self) -> &ConfidenceInterval {
        &self.intervals[0]
    }

    /// Percentile interval of any functional of the fitted parameters, e.g.
    /// a quantile.
    pub fn interval_of<F>(&self, f: F) -> Option<ConfidenceInterval>
    where
        F: Fn(&FittedParams) -> Option<f64>,
    {
        let values: Vec<f64> = self.replicates.iter().filter_map(f).collect();
        (!values.is_empty()).then(|| ConfidenceInterval::percentile(&values, self.level, self.n_bootstrap))
    }
}

/// Minimum replicate count accepted by [`bootstrap_ci`].
pub const MIN_BOOTSTRAP: usize = 100;

/// Fraction of failed replicates above which the bootstrap is rejected.
pub const MAX_BOOTSTRAP_FAILURE: f64 = 0.2;

/// Percentile bootstrap: resample with replacement, refit, and take the
/// empirical `(1 - level)/2` and `1 - (1 - level)/2` quantiles of each
/// parameter. Replicate `b` draws from the stream `(seed, b)`, so the result
/// does not depend on the number of worker threads. Replicates whose fit
/// fails or does not converge are dropped and counted.
pub fn bootstrap_ci<F>(
    sample: &[f64],
    fit: F,
    n_bootstrap: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapResult>
where
    F: Fn(&[f64]) -> Result<FitResult> + Sync,
{
    use rand::Rng;

    if n_bootstrap < MIN_BOOTSTRAP {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP} replicates, got {n_bootstrap}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    if sample.is_empty() {
        return Err(Error::TooFewSamples { got: 0, min: MIN_FIT_N });
    }

    let outcomes: Vec<Option<FittedParams>> = (0..n_bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, &[b as u64]);
            let n = sample.len();
            let resample: Vec<f64> = (0..n).map(|_| sample[rng.gen_range(0..n)]).collect();
            match fit(&resample) {
                Ok(r) if r.converged => Some(r.params),
                _ => None,
            }
        })
        .collect();

    let replicates: Vec<FittedParams> = outcomes.into_iter().flatten().collect();
    let n_failed = n_bootstrap - replicates.len();
    if replicates.is_empty() || n_failed as f64 > MAX_BOOTSTRAP_FAILURE * n_bootstrap as f64 {
        return Err(Error::BootstrapDegenerate {
            failed: n_failed,
            total: n_bootstrap,
        });
    }

    let names: Vec<String> = replicates[0].names().iter().map(|s| s.to_string()).collect();
    let intervals = (0..names.len())
        .map(|k| {
            let column: Vec<f64> = replicates.iter().map(|p| p.values()[k]).collect();
            ConfidenceInterval::percentile(&column, level, n_bootstrap)
        })
        .collect();
    Ok(BootstrapResult {
        names,
        intervals,
        replicates,
        n_bootstrap,
        n_failed,
        level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GumbelDecision {
    KeepGev,
    PreferGumbel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GumbelVerdict {
    pub decision: GumbelDecision,
    pub flag: GumbelFlag,
    pub gev_fit: FitResult,
    /// Present only when the ξ interval contains zero and the Gumbel model
    /// was fitted.
    pub gumbel_fit: Option<FitResult>,
    pub lr_statistic: Option<f64>,
    pub critical_value: f64,
}

/// When the ξ interval contains zero, compares the GEV fit with a Gumbel fit
/// by a likelihood-ratio test against χ²(1) at the 5% level. Otherwise the GEV
/// fit is kept without refitting.
pub fn gumbel_hypothesis_check(
    sample: &[f64],
    gev_fit: &FitResult,
    ci_xi: &ConfidenceInterval,
    options: &FitOptions,
) -> Result<GumbelVerdict> {
    if !gev_fit.converged || gev_fit.params.family() != Family::Gev {
        return Err(Error::InvalidArgument(
            "Gumbel check needs a converged GEV fit".into(),
        ));
    }
    if !ci_xi.contains(0.0) {
        return Ok(GumbelVerdict {
            decision: GumbelDecision::KeepGev,
            flag: GumbelFlag::XiCiExcludesZero,
            gev_fit: gev_fit.clone().with_xi_interval(ci_xi),
            gumbel_fit: None,
            lr_statistic: None,
            critical_value: CHI2_1DF_95,
        });
    }
    let gumbel = fit_gumbel_mle(sample, options)?;
    let lr = (2.0 * (gev_fit.log_likelihood - gumbel.log_likelihood)).max(0.0);
    let decision = if lr < CHI2_1DF_95 {
        GumbelDecision::PreferGumbel
    } else {
        GumbelDecision::KeepGev
    };
    Ok(GumbelVerdict {
        decision,
        flag: GumbelFlag::XiCiIncludesZero,
        gev_fit: gev_fit.clone().with_xi_interval(ci_xi),
        gumbel_fit: Some(gumbel),
        lr_statistic: Some(lr),
        critical_value: CHI2_1DF_95,
    })
}

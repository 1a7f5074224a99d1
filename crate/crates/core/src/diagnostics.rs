//! Goodness-of-fit and comparison products built from completed runs:
//! return-level tables, histograms with the fitted density, worst-case
//! quantile statements and per-model extreme-error summaries.

use serde::{Deserialize, Serialize};

use crate::cv::{run_blocking_role, CvMode, CvPlan, DataSource, ErrorKind, ExtremesSample, ScoreRole};
use crate::fitting::{fit_gev_mle, BootstrapResult, ConfidenceInterval, Family, FitOptions, FitResult, FittedParams};
use crate::models::ModelSpec;
use crate::stats::{sorted, FiveNumberSummary};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnLevelData {
    pub probabilities: Vec<f64>,
    pub theoretical_quantiles: Vec<f64>,
    pub empirical_quantiles: Vec<f64>,
    pub params: FittedParams,
}

fn require_converged(fit: &FitResult) -> Result<()> {
    if fit.converged {
        Ok(())
    } else {
        Err(Error::NotConverged)
    }
}

/// Theoretical against empirical quantiles at the plotting positions
/// `i / (m + 1)`. With `max_points` smaller than the sample size, evenly
/// spaced order statistics are kept (always including the extremes).
pub fn return_level_data(values: &[f64], fit: &FitResult, max_points: Option<usize>) -> Result<ReturnLevelData> {
    require_converged(fit)?;
    if values.is_empty() {
        return Err(Error::TooFewSamples { got: 0, min: 1 });
    }
    let s = sorted(values);
    let m = s.len();
    let keep: Vec<usize> = match max_points {
        Some(k) if k >= 2 && k < m => {
            let mut idx: Vec<usize> = (0..k).map(|i| (i * (m - 1) + (k - 1) / 2) / (k - 1)).collect();
            idx[0] = 0;
            idx[k - 1] = m - 1;
            idx.dedup();
            idx
        }
        _ => (0..m).collect(),
    };
    let probabilities: Vec<f64> = keep.iter().map(|&i| (i + 1) as f64 / (m + 1) as f64).collect();
    let theoretical_quantiles = probabilities
        .iter()
        .map(|&p| fit.params.quantile(p))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ReturnLevelData {
        probabilities,
        theoretical_quantiles,
        empirical_quantiles: keep.iter().map(|&i| s[i]).collect(),
        params: fit.params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub center: f64,
    pub empirical_density: f64,
    pub fitted_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramTable {
    pub bins: Vec<HistogramBin>,
    /// Average error of the run, for a reference line next to the extremes.
    pub mean_metric: Option<f64>,
}

/// Density-normalized histogram over `[min, max]` of `values` with the fitted
/// density at each bin centre.
pub fn histogram_with_fit(values: &[f64], fit: &FitResult, n_bins: usize, mean_metric: Option<f64>) -> Result<HistogramTable> {
    require_converged(fit)?;
    if n_bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if values.is_empty() {
        return Err(Error::TooFewSamples { got: 0, min: 1 });
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, width) = if hi > lo {
        (lo, (hi - lo) / n_bins as f64)
    } else {
        (lo - 0.5, 1.0 / n_bins as f64)
    };
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let total = values.len() as f64;
    let bins = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let left = lo + width * k as f64;
            let right = if k + 1 == n_bins { lo + width * n_bins as f64 } else { lo + width * (k + 1) as f64 };
            let center = 0.5 * (left + right);
            HistogramBin {
                left,
                right,
                center,
                empirical_density: c as f64 / (total * (right - left)),
                fitted_density: fit.params.logpdf(center).exp(),
            }
        })
        .collect();
    Ok(HistogramTable { bins, mean_metric })
}

/// What the quantile statement is about.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatementContext {
    pub model: Option<String>,
    pub error_kind: Option<ErrorKind>,
    pub mode: Option<CvMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseQuantile {
    pub confidence: f64,
    pub quantile: f64,
    pub ci: Option<ConfidenceInterval>,
    pub family: Family,
    #[serde(flatten)]
    pub context: StatementContext,
    pub statement: String,
}

/// Quantile of the fitted extreme-error law at `confidence`, with a bootstrap
/// interval when replicates are supplied.
pub fn worst_case_quantile(
    fit: &FitResult,
    confidence: f64,
    context: &StatementContext,
    bootstrap: Option<&BootstrapResult>,
) -> Result<WorstCaseQuantile> {
    require_converged(fit)?;
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let quantile = fit.params.quantile(confidence)?;
    let ci = bootstrap.and_then(|b| b.interval_of(|p| p.quantile(confidence).ok()));

    let what = match context.error_kind {
        Some(ErrorKind::Absolute) => "absolute error",
        Some(ErrorKind::Squared) => "squared error",
        None => "error",
    };
    let (which, unit) = match (fit.params, context.mode) {
        (FittedParams::Gpd(p), _) => ("an individual", format!("among errors above {}", fmt_num(p.u))),
        (_, Some(CvMode::Threshold { u })) => ("an individual", format!("among errors above {}", fmt_num(u))),
        _ => ("the largest", "per validation block".to_string()),
    };
    let mut statement = context.model.as_ref().map(|m| format!("{m}: ")).unwrap_or_default();
    statement.push_str(&format!(
        "{which} {what} {unit} stays at or below {} with probability {}",
        fmt_num(quantile),
        fmt_num(confidence)
    ));
    if let Some(ci) = &ci {
        statement.push_str(&format!(
            " ({}% bootstrap interval {} to {})",
            fmt_num(ci.level * 100.0),
            fmt_num(ci.lower),
            fmt_num(ci.upper)
        ));
    }
    Ok(WorstCaseQuantile {
        confidence,
        quantile,
        ci,
        family: fit.params.family(),
        context: context.clone(),
        statement,
    })
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// Fit outcome of one comparison row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RowFit {
    Fitted { fit: FitResult },
    /// The extremes are all equal, so no tail law can be fitted.
    NotAvailable { cause: String },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparisonRow {
    pub model: ModelSpec,
    pub role: ScoreRole,
    pub summary: Option<FiveNumberSummary>,
    /// Raw extremes, for violin plots.
    pub values: Vec<f64>,
    pub fit: RowFit,
    pub mean_metric: Option<f64>,
}

impl ModelComparisonRow {
    pub fn fitted(&self) -> Option<&FitResult> {
        match &self.fit {
            RowFit::Fitted { fit } => Some(fit),
            _ => None,
        }
    }
}

fn row_from(spec: &ModelSpec, role: ScoreRole, run: Result<ExtremesSample>, options: &FitOptions) -> ModelComparisonRow {
    let run = match run {
        Ok(r) => r,
        Err(e) => {
            return ModelComparisonRow {
                model: spec.clone(),
                role,
                summary: None,
                values: Vec::new(),
                fit: RowFit::Failed { error: e.to_string() },
                mean_metric: None,
            }
        }
    };
    let fit = match fit_gev_mle(&run.values, options) {
        Ok(f) => RowFit::Fitted { fit: f },
        Err(e @ Error::DegenerateSample { .. }) => RowFit::NotAvailable { cause: e.to_string() },
        Err(e) => RowFit::Failed { error: e.to_string() },
    };
    ModelComparisonRow {
        model: spec.clone(),
        role,
        summary: FiveNumberSummary::of(&run.values),
        mean_metric: Some(run.mean_metric()),
        values: run.values,
        fit,
    }
}

/// Runs the blocking pipeline for every model twice, scoring the training
/// and the validation portion, and fits a GEV to each set of maxima.
/// Failures are recorded per row.
pub fn compare_models(source: &DataSource, specs: &[ModelSpec], plan: &CvPlan, options: &FitOptions) -> Result<Vec<ModelComparisonRow>> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("compare needs at least one model".into()));
    }
    if plan.mode != CvMode::BlockMaxima {
        return Err(Error::InvalidArgument("compare uses block_maxima mode".into()));
    }
    plan.validate()?;
    let mut rows = Vec::with_capacity(2 * specs.len());
    for spec in specs {
        for role in [ScoreRole::Training, ScoreRole::Validation] {
            let run = run_blocking_role(source, spec, plan, role);
            rows.push(row_from(spec, role, run, options));
        }
    }
    Ok(rows)
}

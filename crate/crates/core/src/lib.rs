//! Extreme-value analysis of regression model errors.
//!
//! The crate runs Monte-Carlo cross-validation over a regression model,
//! collects either the per-split maximum error (block maxima) or every error
//! above a threshold (peaks over threshold), and fits the generalized extreme
//! value (GEV) or generalized Pareto (GPD) family to those extremes. The
//! fitted tail answers questions such as "how large is the error the model
//! stays below in 95% of cases", which averaged metrics like MAE cannot.
//!
//! Modules, bottom-up:
//!
//! - [`distributions`]: GEV/GPD densities, CDFs, quantiles and samplers.
//! - [`optimize`]: Nelder-Mead simplex minimizer used by the fits.
//! - [`fitting`]: maximum-likelihood fits, percentile bootstrap, Gumbel test.
//! - [`data`]: synthetic parabola generator and CSV ingestion.
//! - [`models`]: the regression model zoo.
//! - [`cv`]: Monte-Carlo cross-validation engine.
//! - [`threshold`]: parameter-stability curves and threshold suggestion.
//! - [`diagnostics`]: return-level data, histograms, quantile statements,
//!   model comparison.

pub mod cv;
pub mod data;
pub mod diagnostics;
pub mod distributions;
mod error;
pub mod fitting;
pub mod models;
pub mod optimize;
pub mod rng;
pub mod stats;
pub mod threshold;

pub use error::{Error, ErrorClass, Result};

//! Command-line arguments. Every command's arguments (minus the output
//! directory) are serialized into the run manifest, which is how `replay`
//! reconstructs a run.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use tailrisk::cv::{ErrorKind, ScoreRole};
use tailrisk::fitting::Family;
use tailrisk::models::ModelSpec;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tailrisk", version, about = "Extreme-value analysis of regression model errors")]
pub struct Cli {
    /// Maximum number of worker threads (outputs do not depend on it).
    #[arg(long, global = true, env = "TAILRISK_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Write a synthetic parabola dataset as CSV.
    Simulate(SimulateArgs),
    /// Collect block maxima or threshold exceedances of model errors.
    Run(RunArgs),
    /// Fit a GEV or GPD to collected extremes, with bootstrap intervals.
    Fit(FitArgs),
    /// Shape-stability curve over candidate thresholds and a suggested threshold.
    Stability(StabilityArgs),
    /// Worst-case quantile statements and plot tables for a fit.
    Report(ReportArgs),
    /// Block-maxima comparison of several models on training and validation errors.
    Compare(CompareArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Run(_) => "run",
            Command::Fit(_) => "fit",
            Command::Stability(_) => "stability",
            Command::Report(_) => "report",
            Command::Compare(_) => "compare",
            Command::Replay(_) => "replay",
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Command::Simulate(a) => a.out = out,
            Command::Run(a) => a.out = out,
            Command::Fit(a) => a.out = out,
            Command::Stability(a) => a.out = out,
            Command::Report(a) => a.out = out,
            Command::Compare(a) => a.out = out,
            Command::Replay(a) => a.out = out,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Number of rows.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long, conflicts_with = "synthetic_block")]
    pub data: Option<PathBuf>,
    /// Target column of the CSV file.
    #[arg(long)]
    pub target: Option<String>,
    /// Columns to drop before anything else (comma separated or repeated).
    #[arg(long = "drop", value_delimiter = ',')]
    pub drop_columns: Vec<String>,
    /// Fail on non-numeric feature columns instead of dropping them.
    #[arg(long)]
    pub keep_non_numeric: bool,
    /// Fail on missing values instead of dropping the rows.
    #[arg(long)]
    pub keep_missing: bool,
    /// Skip z-score normalization of the features.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Instead of a file, draw a fresh synthetic parabola of this many rows
    /// for every repetition.
    #[arg(long)]
    pub synthetic_block: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorArg {
    Absolute,
    Squared,
}

impl From<ErrorArg> for ErrorKind {
    fn from(e: ErrorArg) -> Self {
        match e {
            ErrorArg::Absolute => ErrorKind::Absolute,
            ErrorArg::Squared => ErrorKind::Squared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Block,
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleArg {
    Validation,
    Training,
}

impl From<RoleArg> for ScoreRole {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Validation => ScoreRole::Validation,
            RoleArg::Training => ScoreRole::Training,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyArg {
    Gev,
    Gpd,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gev => Family::Gev,
            FamilyArg::Gpd => Family::Gpd,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PlanArgs {
    /// Number of Monte-Carlo repetitions.
    #[arg(long, default_value_t = 1000)]
    pub repetitions: usize,
    /// Share of rows used for training in each split.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, value_enum, default_value_t = ErrorArg::Absolute)]
    pub error: ErrorArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Hyperparameter overrides; each applies only to the model kind it belongs to.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct HyperArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub n_estimators: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

impl HyperArgs {
    pub fn spec(&self, name: &str) -> CliResult<ModelSpec> {
        let mut spec = ModelSpec::from_name(name).map_err(|e| CliError::Usage(e.to_string()))?;
        match &mut spec {
            ModelSpec::Lasso { alpha } => *alpha = self.alpha.unwrap_or(*alpha),
            ModelSpec::Knn { k } => *k = self.k.unwrap_or(*k),
            ModelSpec::RandomForest { n_trees } => *n_trees = self.n_trees.unwrap_or(*n_trees),
            ModelSpec::GradientBoosting { n_estimators, learning_rate, max_depth } => {
                *n_estimators = self.n_estimators.unwrap_or(*n_estimators);
                *learning_rate = self.learning_rate.unwrap_or(*learning_rate);
                *max_depth = self.max_depth.unwrap_or(*max_depth);
            }
            ModelSpec::Linear | ModelSpec::DecisionTree => {}
        }
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// One of linear, lasso, knn, decision_tree, random_forest, gradient_boosting.
    #[arg(long, default_value = "linear")]
    pub model: String,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Block)]
    pub mode: ModeArg,
    /// Threshold u for `--mode threshold`.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Portion of each split the errors are measured on.
    #[arg(long, value_enum, default_value_t = RoleArg::Validation)]
    pub role: RoleArg,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BootstrapArgs {
    /// Bootstrap replicates; 0 omits the intervals.
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
    /// Confidence level of the intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// extremes.json written by `run`.
    #[arg(long)]
    pub extremes: PathBuf,
    /// Defaults to gev for block maxima and gpd for threshold runs.
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Threshold for a GPD fit; defaults to the run's threshold.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct StabilityArgs {
    /// JSON file with the error sample: an array of numbers or an object
    /// with a `values` array (e.g. extremes.json of a low-threshold run).
    #[arg(long)]
    pub errors: PathBuf,
    /// Explicit thresholds (comma separated, ascending).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub thresholds: Vec<f64>,
    /// Number of quantile grid points when no thresholds are given.
    #[arg(long, default_value_t = 20)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 0.70)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 0.99)]
    pub grid_hi: f64,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// fit.json written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Confidence levels (comma separated); default 0.90, 0.95, 0.99.
    #[arg(long, value_delimiter = ',')]
    pub confidence: Vec<f64>,
    /// Histogram bins.
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    /// Cap on return-level rows (evenly spaced order statistics).
    #[arg(long)]
    pub max_points: Option<usize>,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Models to compare (comma separated); default all.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// manifest.json of an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the re-run.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

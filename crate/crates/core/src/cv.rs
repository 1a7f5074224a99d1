//! Monte-Carlo cross-validation that collects extreme prediction errors.
//!
//! Each repetition `j` splits the data at random, trains a model on one part
//! and scores it on the other. Block-maxima mode keeps the largest error of
//! each repetition; threshold mode pools every error above `u`.
//!
//! Random streams are keyed by `(plan.seed, j, purpose)` with purpose 0 for
//! fresh synthetic data, 1 for the split and 2 for model training, so runs
//! are reproducible for any number of worker threads.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{synthetic_parabola, TabularDataset};
use crate::models::{train, ModelSpec, TrainedModel};
use crate::rng::{derive_seed, stream};
use crate::stats::mean;
use crate::{Error, Result};

const PURPOSE_DATA: u64 = 0;
const PURPOSE_SPLIT: u64 = 1;
const PURPOSE_TRAIN: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Absolute,
    Squared,
}

impl ErrorKind {
    pub fn apply(self, residual: f64) -> f64 {
        match self {
            ErrorKind::Absolute => residual.abs(),
            ErrorKind::Squared => residual * residual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CvMode {
    BlockMaxima,
    Threshold { u: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub n_repetitions: usize,
    pub train_fraction: f64,
    pub error_kind: ErrorKind,
    pub mode: CvMode,
    pub seed: u64,
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_repetitions == 0 {
            return Err(Error::InvalidArgument("n_repetitions must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train_fraction must lie strictly inside (0, 1), got {}",
                self.train_fraction
            )));
        }
        if let CvMode::Threshold { u } = self.mode {
            if !u.is_finite() {
                return Err(Error::InvalidArgument("threshold must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Where each repetition's rows come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// One table, re-split every repetition.
    Fixed(TabularDataset),
    /// A fresh parabola sample of `block_size` rows every repetition.
    SyntheticParabola { block_size: usize },
}

impl DataSource {
    pub fn label(&self) -> &'static str {
        match self {
            DataSource::Fixed(_) => "fixed",
            DataSource::SyntheticParabola { .. } => "synthetic_parabola",
        }
    }

    fn dataset_for(&self, seed: u64, j: u64) -> Result<std::borrow::Cow<'_, TabularDataset>> {
        match self {
            DataSource::Fixed(d) => Ok(std::borrow::Cow::Borrowed(d)),
            DataSource::SyntheticParabola { block_size } => {
                let mut rng = stream(seed, &[j, PURPOSE_DATA]);
                synthetic_parabola(*block_size, &mut rng).map(std::borrow::Cow::Owned)
            }
        }
    }
}

impl From<TabularDataset> for DataSource {
    fn from(d: TabularDataset) -> Self {
        DataSource::Fixed(d)
    }
}

/// Which portion of each split the errors are measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreRole {
    Training,
    Validation,
}

/// B1/B2: block maxima of absolute/squared errors. B3/B4: threshold
/// exceedances of absolute/squared errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremesKind {
    B1,
    B2,
    B3,
    B4,
}

impl ExtremesKind {
    pub fn of(mode: CvMode, kind: ErrorKind) -> Self {
        match (mode, kind) {
            (CvMode::BlockMaxima, ErrorKind::Absolute) => ExtremesKind::B1,
            (CvMode::BlockMaxima, ErrorKind::Squared) => ExtremesKind::B2,
            (CvMode::Threshold { .. }, ErrorKind::Absolute) => ExtremesKind::B3,
            (CvMode::Threshold { .. }, ErrorKind::Squared) => ExtremesKind::B4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremesSample {
    pub values: Vec<f64>,
    pub kind: ExtremesKind,
    pub plan: CvPlan,
    pub model: ModelSpec,
    pub role: ScoreRole,
    pub source: String,
    /// Mean error (MAE or MSE) of every successful split, in split order.
    pub per_split_means: Vec<f64>,
    pub n_failed_splits: usize,
    /// Number of errors computed across all successful splits.
    pub n_evaluated: usize,
    /// Number of pooled exceedances (threshold mode only).
    pub n_exceedances: Option<usize>,
}

impl ExtremesSample {
    /// Average of the per-split mean errors.
    pub fn mean_metric(&self) -> f64 {
        mean(&self.per_split_means)
    }

    pub fn threshold(&self) -> Option<f64> {
        match self.plan.mode {
            CvMode::Threshold { u } => Some(u),
            CvMode::BlockMaxima => None,
        }
    }
}

/// Row indices of a uniform random partition: `round(fraction * n)` rows for
/// training, the rest for validation, both in ascending order.
pub fn mc_split_indices<R: Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::EmptySplit { n_rows: n, fraction });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (train, valid) = idx.split_at_mut(n_train);
    train.sort_unstable();
    valid.sort_unstable();
    Ok((train.to_vec(), valid.to_vec()))
}

pub fn mc_split<R: Rng + ?Sized>(
    data: &TabularDataset,
    fraction: f64,
    rng: &mut R,
) -> Result<(TabularDataset, TabularDataset)> {
    let (t, v) = mc_split_indices(data.n_rows(), fraction, rng)?;
    Ok((data.subset(&t), data.subset(&v)))
}

/// Per-row absolute or squared prediction errors of `model` on `data`.
pub fn split_errors(model: &TrainedModel, data: &TabularDataset, kind: ErrorKind) -> Result<Vec<f64>> {
    data.rows()
        .zip(data.target())
        .map(|(row, &y)| model.predict(row).map(|p| kind.apply(p - y)))
        .collect()
}

/// Errors of repetition `j` on the portion selected by `role`.
fn repetition_errors(source: &DataSource, spec: &ModelSpec, plan: &CvPlan, role: ScoreRole, j: u64) -> Result<Vec<f64>> {
    let data = source.dataset_for(plan.seed, j)?;
    let mut rng = stream(plan.seed, &[j, PURPOSE_SPLIT]);
    let (train_set, valid_set) = mc_split(&data, plan.train_fraction, &mut rng)?;
    let model = train(spec, &train_set, derive_seed(plan.seed, &[j, PURPOSE_TRAIN]))?;
    let scored = match role {
        ScoreRole::Training => &train_set,
        ScoreRole::Validation => &valid_set,
    };
    split_errors(&model, scored, plan.error_kind)
}

/// Runs every repetition (in parallel) and returns the per-split outcomes in
/// split order.
fn repetitions(source: &DataSource, spec: &ModelSpec, plan: &CvPlan, role: ScoreRole) -> Result<Vec<Option<Vec<f64>>>> {
    plan.validate()?;
    spec.validate()?;
    let outcomes: Vec<Result<Vec<f64>>> = (0..plan.n_repetitions as u64)
        .into_par_iter()
        .map(|j| repetition_errors(source, spec, plan, role, j))
        .collect();
    let mut out = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o {
            Ok(e) => out.push(Some(e)),
            // a split that cannot be formed is a plan problem, not a model one
            Err(e @ Error::EmptySplit { .. }) => return Err(e),
            Err(_) => out.push(None),
        }
    }
    if out.iter().all(Option::is_none) {
        return Err(Error::AllSplitsFailed(plan.n_repetitions));
    }
    Ok(out)
}

fn assemble(
    source: &DataSource,
    spec: &ModelSpec,
    plan: &CvPlan,
    role: ScoreRole,
    reps: &[Option<Vec<f64>>],
    values: Vec<f64>,
    n_exceedances: Option<usize>,
) -> ExtremesSample {
    let ok: Vec<&Vec<f64>> = reps.iter().flatten().collect();
    ExtremesSample {
        values,
        kind: ExtremesKind::of(plan.mode, plan.error_kind),
        plan: plan.clone(),
        model: spec.clone(),
        role,
        source: source.label().to_string(),
        per_split_means: ok.iter().map(|e| mean(e)).collect(),
        n_failed_splits: reps.len() - ok.len(),
        n_evaluated: ok.iter().map(|e| e.len()).sum(),
        n_exceedances,
    }
}

/// Block-maxima run scoring the chosen portion of every split.
pub fn run_blocking_role(source: &DataSource, spec: &ModelSpec, plan: &CvPlan, role: ScoreRole) -> Result<ExtremesSample> {
    if plan.mode != CvMode::BlockMaxima {
        return Err(Error::InvalidArgument("run_blocking needs block_maxima mode".into()));
    }
    let reps = repetitions(source, spec, plan, role)?;
    let values = reps
        .iter()
        .flatten()
        .map(|e| e.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(assemble(source, spec, plan, role, &reps, values, None))
}

/// Threshold run pooling every error above `u` on the chosen portion.
pub fn run_threshold_role(source: &DataSource, spec: &ModelSpec, plan: &CvPlan, role: ScoreRole) -> Result<ExtremesSample> {
    let CvMode::Threshold { u } = plan.mode else {
        return Err(Error::InvalidArgument("run_threshold needs threshold mode".into()));
    };
    let reps = repetitions(source, spec, plan, role)?;
    let values: Vec<f64> = reps.iter().flatten().flatten().copied().filter(|&e| e > u).collect();
    if values.is_empty() {
        return Err(Error::NoExceedances(u));
    }
    let n = values.len();
    Ok(assemble(source, spec, plan, role, &reps, values, Some(n)))
}

pub fn run_blocking(source: &DataSource, spec: &ModelSpec, plan: &CvPlan) -> Result<ExtremesSample> {
    run_blocking_role(source, spec, plan, ScoreRole::Validation)
}

pub fn run_threshold(source: &DataSource, spec: &ModelSpec, plan: &CvPlan) -> Result<ExtremesSample> {
    run_threshold_role(source, spec, plan, ScoreRole::Validation)
}

/// Dispatches on `plan.mode`.
pub fn run(source: &DataSource, spec: &ModelSpec, plan: &CvPlan, role: ScoreRole) -> Result<ExtremesSample> {
    match plan.mode {
        CvMode::BlockMaxima => run_blocking_role(source, spec, plan, role),
        CvMode::Threshold { .. } => run_threshold_role(source, spec, plan, role),
    }
}

/// Every error of every split (validation role), in split order. Used to
/// build threshold-stability curves from one set of splits.
pub fn all_errors(source: &DataSource, spec: &ModelSpec, plan: &CvPlan) -> Result<Vec<f64>> {
    Ok(repetitions(source, spec, plan, ScoreRole::Validation)?
        .into_iter()
        .flatten()
        .flatten()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use proptest::prelude::*;

    fn plan(n: usize, mode: CvMode) -> CvPlan {
        CvPlan {
            n_repetitions: n,
            train_fraction: 0.5,
            error_kind: ErrorKind::Absolute,
            mode,
            seed: 42,
        }
    }

    fn ten_rows() -> TabularDataset {
        let rows = (0..10).map(|i| vec![i as f64]).collect();
        let y = (0..10).map(|i| (i * i) as f64).collect();
        TabularDataset::new(rows, y, vec!["x".into()], "y", Provenance::Derived).unwrap()
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let d = ten_rows();
        let (t, v) = mc_split_indices(d.n_rows(), 0.8, &mut stream(1, &[])).unwrap();
        assert_eq!((t.len(), v.len()), (8, 2));
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!((t.clone(), v.clone()), mc_split_indices(10, 0.8, &mut stream(1, &[])).unwrap());
        assert!(matches!(mc_split_indices(3, 0.1, &mut stream(1, &[])), Err(Error::EmptySplit { .. })));
        assert!(matches!(mc_split_indices(3, 0.9, &mut stream(1, &[])), Err(Error::EmptySplit { .. })));
    }

    #[test]
    fn error_kinds() {
        assert_eq!(ErrorKind::Absolute.apply(-3.0), 3.0);
        assert_eq!(ErrorKind::Squared.apply(-3.0), 9.0);
        let d = ten_rows();
        let m = train(&ModelSpec::DecisionTree, &d, 0).unwrap();
        assert!(split_errors(&m, &d, ErrorKind::Squared).unwrap().iter().all(|&e| e == 0.0));
        let lin = train(&ModelSpec::Linear, &d, 0).unwrap();
        let a = split_errors(&lin, &d, ErrorKind::Absolute).unwrap();
        let s = split_errors(&lin, &d, ErrorKind::Squared).unwrap();
        for (a, s) in a.iter().zip(&s) {
            assert_eq!(a * a, *s);
        }
    }

    #[test]
    fn single_repetition_keeps_that_split_max() {
        let src = DataSource::SyntheticParabola { block_size: 40 };
        let p = plan(1, CvMode::BlockMaxima);
        let run = run_blocking(&src, &ModelSpec::Linear, &p).unwrap();
        let errs = all_errors(&src, &ModelSpec::Linear, &p).unwrap();
        assert_eq!(run.values, vec![errs.iter().copied().fold(f64::MIN, f64::max)]);
        assert_eq!(run.n_evaluated, 20);
        assert_eq!(run.kind, ExtremesKind::B1);
    }

    #[test]
    fn threshold_edges() {
        let src = DataSource::SyntheticParabola { block_size: 40 };
        let low = run_threshold(&src, &ModelSpec::Linear, &plan(5, CvMode::Threshold { u: -1.0 })).unwrap();
        assert_eq!(low.values.len(), 5 * 20);
        assert_eq!(low.n_exceedances, Some(100));
        assert!(matches!(
            run_threshold(&src, &ModelSpec::Linear, &plan(5, CvMode::Threshold { u: 1e9 })),
            Err(Error::NoExceedances(_))
        ));
    }

    #[test]
    fn blocking_and_threshold_share_the_maximum() {
        let src = DataSource::SyntheticParabola { block_size: 60 };
        let b = run_blocking(&src, &ModelSpec::Linear, &plan(30, CvMode::BlockMaxima)).unwrap();
        let t = run_threshold(&src, &ModelSpec::Linear, &plan(30, CvMode::Threshold { u: 10.0 })).unwrap();
        let max = |v: &[f64]| v.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(max(&b.values), max(&t.values));
        assert!(t.values.iter().all(|&v| v > 10.0));
        assert_eq!(b.per_split_means, t.per_split_means);
    }

    #[test]
    fn failed_splits_are_counted() {
        // every training half of a two-row table has one row, which cannot be trained on
        let rows = vec![vec![0.0], vec![1.0]];
        let d = TabularDataset::new(rows, vec![0.0, 1.0], vec!["x".into()], "y", Provenance::Derived).unwrap();
        let r = run_blocking(&d.into(), &ModelSpec::Linear, &plan(4, CvMode::BlockMaxima));
        assert!(matches!(r, Err(Error::AllSplitsFailed(4))));
    }

    #[test]
    fn invalid_plans() {
        let src = DataSource::SyntheticParabola { block_size: 10 };
        let mut p = plan(0, CvMode::BlockMaxima);
        assert!(run_blocking(&src, &ModelSpec::Linear, &p).is_err());
        p.n_repetitions = 2;
        p.train_fraction = 1.0;
        assert!(run_blocking(&src, &ModelSpec::Linear, &p).is_err());
        p.train_fraction = 0.5;
        p.mode = CvMode::Threshold { u: f64::NAN };
        assert!(run_threshold(&src, &ModelSpec::Linear, &p).is_err());
        assert!(run_blocking(&src, &ModelSpec::Linear, &p).is_err());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let src = DataSource::SyntheticParabola { block_size: 30 };
        let p = plan(40, CvMode::BlockMaxima);
        let spec = ModelSpec::RandomForest { n_trees: 5 };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_blocking(&src, &spec, &p)).unwrap();
        let b = four.install(|| run_blocking(&src, &spec, &p)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn block_max_dominates_split_mean(seed in 0u64..1000, knn in any::<bool>()) {
            let spec = if knn { ModelSpec::Knn { k: 3 } } else { ModelSpec::Linear };
            let p = CvPlan { seed, ..plan(10, CvMode::BlockMaxima) };
            let r = run_blocking(&DataSource::SyntheticParabola { block_size: 24 }, &spec, &p).unwrap();
            prop_assert_eq!(r.values.len(), 10 - r.n_failed_splits);
            for (m, mean) in r.values.iter().zip(&r.per_split_means) {
                prop_assert!(m >= mean);
                prop_assert!(*m >= 0.0);
            }
        }
    }
}

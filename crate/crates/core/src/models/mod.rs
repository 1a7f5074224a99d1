//! Regression model zoo with a uniform train/predict interface.

mod knn;
mod lasso;
mod linear;
mod tree;

use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::{Error, Result};

pub use knn::KnnModel;
pub use lasso::LassoModel;
pub use linear::LinearModel;
pub use tree::{GradientBoosting, RandomForest, RegressionTree};

/// Model kind with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear,
    Lasso { alpha: f64 },
    Knn { k: usize },
    DecisionTree,
    RandomForest { n_trees: usize },
    GradientBoosting { n_estimators: usize, learning_rate: f64, max_depth: usize },
}

impl ModelSpec {
    pub const NAMES: [&'static str; 6] = [
        "linear",
        "lasso",
        "knn",
        "decision_tree",
        "random_forest",
        "gradient_boosting",
    ];

    /// Default-configured model by its snake_case name.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "linear" => Self::Linear,
            "lasso" => Self::Lasso { alpha: 1.0 },
            "knn" => Self::Knn { k: 3 },
            "decision_tree" => Self::DecisionTree,
            "random_forest" => Self::RandomForest { n_trees: 100 },
            "gradient_boosting" => Self::GradientBoosting {
                n_estimators: 100,
                learning_rate: 0.1,
                max_depth: 3,
            },
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown model `{other}` (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Lasso { .. } => "lasso",
            Self::Knn { .. } => "knn",
            Self::DecisionTree => "decision_tree",
            Self::RandomForest { .. } => "random_forest",
            Self::GradientBoosting { .. } => "gradient_boosting",
        }
    }

    /// Every model kind with default hyperparameters.
    pub fn zoo() -> Vec<Self> {
        Self::NAMES.iter().map(|n| Self::from_name(n).expect("known name")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{}: {what}", self.name())));
        match *self {
            Self::Lasso { alpha } if !(alpha >= 0.0 && alpha.is_finite()) => bad("alpha must be finite and >= 0"),
            Self::Knn { k: 0 } => bad("k must be positive"),
            Self::RandomForest { n_trees: 0 } => bad("n_trees must be positive"),
            Self::GradientBoosting { n_estimators, learning_rate, max_depth }
                if n_estimators == 0 || max_depth == 0 || !(learning_rate > 0.0 && learning_rate.is_finite()) =>
            {
                bad("n_estimators, max_depth and learning_rate must be positive")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum State {
    Linear(LinearModel),
    Lasso(LassoModel),
    Knn(KnnModel),
    Tree(RegressionTree),
    Forest(RandomForest),
    Boosting(GradientBoosting),
}

/// A fitted model; immutable, so `predict` may be called from many threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub n_features: usize,
    state: State,
}

/// Trains `spec` on `data`. `seed` keys the bootstrap draws of the random
/// forest and is ignored by the deterministic models.
pub fn train(spec: &ModelSpec, data: &TabularDataset, seed: u64) -> Result<TrainedModel> {
    spec.validate()?;
    if data.n_rows() < 2 {
        return Err(Error::TooFewSamples { got: data.n_rows(), min: 2 });
    }
    let p = data.n_features();
    let x: Vec<f64> = data.rows().flatten().copied().collect();
    let y = data.target();
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let state = match *spec {
        ModelSpec::Linear => State::Linear(LinearModel::fit(&x, y, p)?),
        ModelSpec::Lasso { alpha } => State::Lasso(LassoModel::fit(&x, y, p, alpha)),
        ModelSpec::Knn { k } => State::Knn(KnnModel::fit(&x, y, p, k)),
        ModelSpec::DecisionTree => {
            let rows: Vec<usize> = (0..y.len()).collect();
            State::Tree(RegressionTree::fit(&x, y, p, &rows, None))
        }
        ModelSpec::RandomForest { n_trees } => State::Forest(RandomForest::fit(&x, y, p, n_trees, seed)),
        ModelSpec::GradientBoosting { n_estimators, learning_rate, max_depth } => {
            State::Boosting(GradientBoosting::fit(&x, y, p, n_estimators, learning_rate, max_depth))
        }
    };
    Ok(TrainedModel { spec: spec.clone(), n_features: p, state })
}

impl TrainedModel {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::ShapeMismatch { expected: self.n_features, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(match &self.state {
            State::Linear(m) => m.predict(row),
            State::Lasso(m) => m.predict(row),
            State::Knn(m) => m.predict(row),
            State::Tree(m) => m.predict(row),
            State::Forest(m) => m.predict(row),
            State::Boosting(m) => m.predict(row),
        })
    }

    /// Predictions for every row of `data`.
    pub fn predict_rows(&self, data: &TabularDataset) -> Result<Vec<f64>> {
        data.rows().map(|r| self.predict(r)).collect()
    }

    /// Member trees when the model is a random forest.
    pub fn forest(&self) -> Option<&RandomForest> {
        match &self.state {
            State::Forest(f) => Some(f),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_parabola, Provenance};
    use crate::rng::stream;

    fn table(rows: Vec<Vec<f64>>, y: Vec<f64>) -> TabularDataset {
        let p = rows[0].len();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        TabularDataset::new(rows, y, names, "y", Provenance::Derived).unwrap()
    }

    #[test]
    fn defaults_match_documented_values() {
        let zoo = ModelSpec::zoo();
        assert_eq!(zoo.len(), 6);
        assert_eq!(zoo[1], ModelSpec::Lasso { alpha: 1.0 });
        assert_eq!(zoo[2], ModelSpec::Knn { k: 3 });
        assert_eq!(zoo[4], ModelSpec::RandomForest { n_trees: 100 });
        assert_eq!(
            zoo[5],
            ModelSpec::GradientBoosting { n_estimators: 100, learning_rate: 0.1, max_depth: 3 }
        );
        for s in &zoo {
            assert_eq!(&ModelSpec::from_name(s.name()).unwrap(), s);
            let json = serde_json::to_string(s).unwrap();
            assert_eq!(&serde_json::from_str::<ModelSpec>(&json).unwrap(), s);
        }
        assert!(ModelSpec::from_name("svr").is_err());
    }

    #[test]
    fn linear_on_exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let d = table(x.iter().map(|&v| vec![v]).collect(), x.iter().map(|v| 2.0 * v + 1.0).collect());
        let m = train(&ModelSpec::Linear, &d, 0).unwrap();
        for (p, y) in m.predict_rows(&d).unwrap().iter().zip(d.target()) {
            assert!((p - y).abs() < 1e-9);
        }
    }

    #[test]
    fn decision_tree_has_zero_training_error() {
        let d = synthetic_parabola(200, &mut stream(5, &[])).unwrap();
        let m = train(&ModelSpec::DecisionTree, &d, 0).unwrap();
        for (p, y) in m.predict_rows(&d).unwrap().iter().zip(d.target()) {
            assert_eq!(p, y);
        }
    }

    #[test]
    fn lasso_huge_alpha_on_standardized_data() {
        let d = synthetic_parabola(100, &mut stream(6, &[])).unwrap();
        let x = d.column(0);
        let (m, s) = (crate::stats::mean(&x), crate::stats::std_pop(&x));
        let z = table(x.iter().map(|v| vec![(v - m) / s]).collect(), d.target().to_vec());
        let model = train(&ModelSpec::Lasso { alpha: 1e6 }, &z, 0).unwrap();
        let mean_y = crate::stats::mean(z.target());
        assert!((model.predict(&[0.7]).unwrap() - mean_y).abs() < 1e-9);
    }

    #[test]
    fn knn_reference_query() {
        let d = table(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.0, 1.0, 2.0]);
        let m = train(&ModelSpec::Knn { k: 3 }, &d, 0).unwrap();
        assert_eq!(m.predict(&[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn forest_is_mean_of_members() {
        let d = synthetic_parabola(60, &mut stream(7, &[])).unwrap();
        let m = train(&ModelSpec::RandomForest { n_trees: 100 }, &d, 11).unwrap();
        let f = m.forest().unwrap();
        assert_eq!(f.trees.len(), 100);
        for q in [-4.0, 0.3, 2.2] {
            let manual = f.trees.iter().map(|t| t.predict(&[q])).sum::<f64>() / 100.0;
            assert!((m.predict(&[q]).unwrap() - manual).abs() < 1e-12);
        }
        // the seed drives the bootstrap draws
        assert_eq!(m, train(&ModelSpec::RandomForest { n_trees: 100 }, &d, 11).unwrap());
        assert_ne!(m, train(&ModelSpec::RandomForest { n_trees: 100 }, &d, 12).unwrap());
    }

    #[test]
    fn deterministic_models_ignore_row_order() {
        let d = synthetic_parabola(80, &mut stream(8, &[])).unwrap();
        let extra: Vec<Vec<f64>> = d.rows().enumerate().map(|(i, r)| vec![r[0], (i as f64 * 0.37).sin()]).collect();
        let d = table(extra, d.target().to_vec());
        let mut order: Vec<usize> = (0..d.n_rows()).rev().collect();
        order.rotate_left(17);
        let shuffled = d.subset(&order);
        let queries = [[0.1, 0.2], [-3.3, 0.9], [4.4, -0.5]];
        for spec in ModelSpec::zoo() {
            if matches!(spec, ModelSpec::RandomForest { .. } | ModelSpec::Knn { .. }) {
                continue;
            }
            let a = train(&spec, &d, 0).unwrap();
            let b = train(&spec, &shuffled, 0).unwrap();
            for q in &queries {
                let (pa, pb) = (a.predict(q).unwrap(), b.predict(q).unwrap());
                assert!((pa - pb).abs() < 1e-9, "{}: {pa} vs {pb}", spec.name());
            }
        }
    }

    #[test]
    fn predict_checks_shape() {
        let d = table(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.0, 1.0, 2.0]);
        let m = train(&ModelSpec::Linear, &d, 0).unwrap();
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(Error::ShapeMismatch { expected: 1, got: 2 })));
        assert!(matches!(m.predict(&[f64::NAN]), Err(Error::NonFiniteInput)));
        let one = table(vec![vec![0.0]], vec![1.0]);
        assert!(train(&ModelSpec::Linear, &one, 0).is_err());
        assert!(train(&ModelSpec::Knn { k: 0 }, &d, 0).is_err());
    }
}

//! CART regression trees and the two tree ensembles built on them.

use rand::Rng;

use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Regression tree grown by greedy variance reduction. Candidate thresholds
/// are midpoints between consecutive distinct feature values; rows with
/// `x <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub(crate) nodes: Vec<Node>,
}

struct Grower<'a> {
    x: &'a [f64],
    y: &'a [f64],
    n_features: usize,
    max_depth: Option<usize>,
    nodes: Vec<Node>,
}

/// Best split of `rows`: (feature, threshold, reduction in squared error).
pub(crate) fn best_split(x: &[f64], y: &[f64], n_features: usize, rows: &[usize]) -> Option<(usize, f64, f64)> {
    let m = rows.len();
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = rows.iter().map(|&i| y[i] * y[i]).sum();
    let parent_sse = total_sq - total * total / m as f64;

    let mut best: Option<(usize, f64, f64)> = None;
    let mut order = rows.to_vec();
    for f in 0..n_features {
        let value = |i: usize| x[i * n_features + f];
        // ties in x are ordered by y so the scan does not depend on row order
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(y[a].total_cmp(&y[b])));
        let mut sum_left = 0.0;
        let mut sq_left = 0.0;
        for k in 1..m {
            let prev = order[k - 1];
            sum_left += y[prev];
            sq_left += y[prev] * y[prev];
            let (a, b) = (value(prev), value(order[k]));
            if a == b {
                continue;
            }
            let n_l = k as f64;
            let n_r = (m - k) as f64;
            let sum_right = total - sum_left;
            let sse_left = sq_left - sum_left * sum_left / n_l;
            let sse_right = (total_sq - sq_left) - sum_right * sum_right / n_r;
            let gain = parent_sse - sse_left - sse_right;
            if best.is_none_or(|(_, _, g)| gain > g) {
                let mid = 0.5 * (a + b);
                // adjacent floats: the midpoint may round up onto b
                let threshold = if mid < b { mid } else { a };
                best = Some((f, threshold, gain));
            }
        }
    }
    best
}

impl Grower<'_> {
    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&i| self.y[i] == first);
        let capped = self.max_depth.is_some_and(|d| depth >= d);
        let leaf_value = if pure {
            first
        } else {
            rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64
        };
        if pure || capped || rows.len() < 2 {
            self.nodes.push(Node::Leaf(leaf_value));
            return id;
        }
        let Some((feature, threshold, _)) = best_split(self.x, self.y, self.n_features, rows) else {
            // every row has identical features
            self.nodes.push(Node::Leaf(leaf_value));
            return id;
        };
        self.nodes.push(Node::Leaf(leaf_value));
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[i * self.n_features + feature] <= threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

impl RegressionTree {
    /// Fits a tree on the rows `sample` (duplicates allowed) of the row-major
    /// matrix `x`.
    pub fn fit(x: &[f64], y: &[f64], n_features: usize, sample: &[usize], max_depth: Option<usize>) -> Self {
        assert!(!sample.is_empty(), "tree needs at least one row");
        let mut g = Grower { x, y, n_features, max_depth, nodes: Vec::new() };
        g.grow(sample, 0);
        Self { nodes: g.nodes }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Bagged trees, every feature considered at each split; prediction is the
/// mean over trees. Tree `t` draws its bootstrap rows from stream `(seed, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn fit(x: &[f64], y: &[f64], n_features: usize, n_trees: usize, seed: u64) -> Self {
        let n = y.len();
        let trees = (0..n_trees)
            .map(|t| {
                let mut rng = stream(seed, &[t as u64]);
                let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                RegressionTree::fit(x, y, n_features, &sample, None)
            })
            .collect();
        Self { trees }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Least-squares gradient boosting: start from the target mean, then fit
/// each stage's tree to the current residuals and add it with shrinkage.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBoosting {
    pub init: f64,
    pub learning_rate: f64,
    pub stages: Vec<RegressionTree>,
}

impl GradientBoosting {
    pub fn fit(x: &[f64], y: &[f64], n_features: usize, n_estimators: usize, learning_rate: f64, max_depth: usize) -> Self {
        let n = y.len();
        let init = y.iter().sum::<f64>() / n as f64;
        let mut current = vec![init; n];
        let rows: Vec<usize> = (0..n).collect();
        let mut stages = Vec::with_capacity(n_estimators);
        for _ in 0..n_estimators {
            let residual: Vec<f64> = y.iter().zip(&current).map(|(t, c)| t - c).collect();
            let tree = RegressionTree::fit(x, &residual, n_features, &rows, Some(max_depth));
            for (i, c) in current.iter_mut().enumerate() {
                *c += learning_rate * tree.predict(&x[i * n_features..(i + 1) * n_features]);
            }
            stages.push(tree);
        }
        Self { init, learning_rate, stages }
    }

    /// Prediction using only the first `n_stages` trees.
    pub fn predict_staged(&self, row: &[f64], n_stages: usize) -> f64 {
        self.init
            + self.learning_rate
                * self.stages[..n_stages.min(self.stages.len())]
                    .iter()
                    .map(|t| t.predict(row))
                    .sum::<f64>()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.predict_staged(row, self.stages.len())
    }
}

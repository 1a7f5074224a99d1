//! k-nearest-neighbour regression (unweighted mean, Euclidean distance).

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    n_features: usize,
}

impl KnnModel {
    pub fn fit(x: &[f64], y: &[f64], n_features: usize, k: usize) -> Self {
        Self { k, x: x.to_vec(), y: y.to_vec(), n_features }
    }

    /// Mean target of the `k` closest training rows; equal distances are
    /// resolved in favour of the lower training-row index.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .chunks_exact(self.n_features)
            .enumerate()
            .map(|(i, r)| (r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(dist.len());
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, by_distance);
        }
        dist[..k].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / k as f64
    }
}

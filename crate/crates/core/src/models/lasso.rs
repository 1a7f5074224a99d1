//! L1-penalized least squares by cyclic coordinate descent.
//!
//! Minimizes `(1/(2n)) ||y - Xw - b||^2 + alpha ||w||_1` with an unpenalized
//! intercept `b`, handled by centring X and y.

pub const MAX_SWEEPS: usize = 10_000;
pub const COEF_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub sweeps: usize,
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

impl LassoModel {
    pub fn fit(x: &[f64], y: &[f64], n_features: usize, alpha: f64) -> Self {
        Self::fit_with_tolerance(x, y, n_features, alpha, COEF_TOL)
    }

    pub fn fit_with_tolerance(x: &[f64], y: &[f64], n_features: usize, alpha: f64, tol: f64) -> Self {
        let n = y.len();
        let nf = n as f64;
        let p = n_features;
        let x_mean: Vec<f64> = (0..p)
            .map(|j| (0..n).map(|i| x[i * p + j]).sum::<f64>() / nf)
            .collect();
        let y_mean = y.iter().sum::<f64>() / nf;
        // centred columns, column-major
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|j| (0..n).map(|i| x[i * p + j] - x_mean[j]).collect())
            .collect();
        let col_sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf).collect();
        let mut residual: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let mut w = vec![0.0; p];

        let mut sweeps = 0;
        while sweeps < MAX_SWEEPS {
            sweeps += 1;
            let mut max_change = 0.0f64;
            for j in 0..p {
                if col_sq[j] == 0.0 {
                    continue;
                }
                let rho = cols[j].iter().zip(&residual).map(|(a, r)| a * r).sum::<f64>() / nf + col_sq[j] * w[j];
                let new = soft_threshold(rho, alpha) / col_sq[j];
                let delta = new - w[j];
                if delta != 0.0 {
                    for (r, a) in residual.iter_mut().zip(&cols[j]) {
                        *r -= delta * a;
                    }
                    w[j] = new;
                }
                max_change = max_change.max(delta.abs());
            }
            if max_change < tol {
                break;
            }
        }
        let intercept = y_mean - w.iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>();
        Self { intercept, coefficients: w, sweeps }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::linear::LinearModel;
    use crate::rng::stream;
    use rand::Rng;

    fn table(n: usize, p: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = stream(seed, &[]);
        let x: Vec<f64> = (0..n * p).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.5 + (0..p).map(|j| (j as f64 - 1.0) * x[i * p + j]).sum::<f64>() + rng.gen_range(-0.5..0.5))
            .collect();
        (x, y)
    }

    #[test]
    fn huge_penalty_gives_mean_only() {
        let (x, y) = table(80, 3, 1);
        let m = LassoModel::fit(&x, &y, 3, 1e6);
        assert!(m.coefficients.iter().all(|&w| w == 0.0));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.intercept - mean).abs() < 1e-12);
    }

    #[test]
    fn zero_penalty_reproduces_least_squares() {
        let (x, y) = table(200, 3, 2);
        let ols = LinearModel::fit(&x, &y, 3).unwrap();
        let lasso = LassoModel::fit(&x, &y, 3, 0.0);
        for (a, b) in ols.coefficients.iter().zip(&lasso.coefficients) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((ols.intercept - lasso.intercept).abs() < 1e-6);
    }

    #[test]
    fn penalty_shrinks_coefficients() {
        let (x, y) = table(200, 3, 3);
        let small = LassoModel::fit(&x, &y, 3, 0.01);
        let large = LassoModel::fit(&x, &y, 3, 0.5);
        let l1 = |m: &LassoModel| m.coefficients.iter().map(|w| w.abs()).sum::<f64>();
        assert!(l1(&large) < l1(&small));
    }
}

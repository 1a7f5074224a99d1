//! Ordinary least squares with intercept, solved by Householder QR.

use crate::{Error, Result};

/// Relative size below which a diagonal entry of R counts as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn fit(x: &[f64], y: &[f64], n_features: usize) -> Result<Self> {
        let n = y.len();
        let p = n_features + 1;
        if n < p {
            return Err(Error::RankDeficient);
        }
        // column-major design matrix with a leading column of ones
        let mut a = vec![0.0; n * p];
        for i in 0..n {
            a[i] = 1.0;
            for j in 0..n_features {
                a[(j + 1) * n + i] = x[i * n_features + j];
            }
        }
        let mut b = y.to_vec();
        let mut diag = vec![0.0; p];

        for k in 0..p {
            let col = &mut a[k * n..(k + 1) * n];
            let norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::RankDeficient);
            }
            let alpha = if col[k] > 0.0 { -norm } else { norm };
            // Householder vector v = x - alpha e_k, stored in place
            col[k] -= alpha;
            let v_norm_sq = col[k..].iter().map(|v| v * v).sum::<f64>();
            diag[k] = alpha;
            let v: Vec<f64> = col[k..].to_vec();
            for j in (k + 1)..p {
                let cj = &mut a[j * n..(j + 1) * n];
                let s = v.iter().zip(&cj[k..]).map(|(a, b)| a * b).sum::<f64>() * 2.0 / v_norm_sq;
                for (c, vi) in cj[k..].iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            }
            let s = v.iter().zip(&b[k..]).map(|(a, b)| a * b).sum::<f64>() * 2.0 / v_norm_sq;
            for (c, vi) in b[k..].iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }

        let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if diag.iter().any(|d| d.abs() <= RANK_TOL * scale) {
            return Err(Error::RankDeficient);
        }
        // back substitution with R (diagonal in `diag`, upper part in `a`)
        let mut beta = vec![0.0; p];
        for k in (0..p).rev() {
            let mut s = b[k];
            for j in (k + 1)..p {
                s -= a[j * n + k] * beta[j];
            }
            beta[k] = s / diag[k];
        }
        Ok(Self {
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
        })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let m = LinearModel::fit(&x, &y, 1).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((m.predict(&[*xi]) - yi).abs() < 1e-9);
        }
        assert!((m.coefficients[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations() {
        // two features, noisy target; compare with the 3x3 normal equations
        let x = [0.5, 1.0, 1.5, -0.2, 2.0, 0.3, -1.0, 0.8, 0.1, 0.1, 3.0, -2.0];
        let y = [1.0, 0.5, 2.2, -0.7, 0.9, 4.1];
        let m = LinearModel::fit(&x, &y, 2).unwrap();
        let rows: Vec<[f64; 3]> = (0..6).map(|i| [1.0, x[2 * i], x[2 * i + 1]]).collect();
        // gradient of the squared loss vanishes at the solution
        let beta = [m.intercept, m.coefficients[0], m.coefficients[1]];
        for j in 0..3 {
            let g: f64 = rows
                .iter()
                .zip(&y)
                .map(|(r, yi)| r[j] * (r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() - yi))
                .sum();
            assert!(g.abs() < 1e-10, "{g}");
        }
    }

    #[test]
    fn collinear_columns_are_rejected() {
        let x = [1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0];
        let y = [1.0, 2.0, 3.0, 5.0];
        assert!(matches!(LinearModel::fit(&x, &y, 2), Err(Error::RankDeficient)));
        assert!(matches!(LinearModel::fit(&[1.0], &[1.0], 1), Err(Error::RankDeficient)));
    }
}

//! Parameter-stability analysis for choosing a peaks-over-threshold level.
//!
//! For each candidate `u` the exceedances are fitted once as a GPD with
//! location `u` (equivalently, the excesses `x - u` with location 0), and the
//! shape gets a percentile-bootstrap interval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fitting::{bootstrap_ci, fit_gpd_mle, ConfidenceInterval, FitOptions};
use crate::rng::derive_seed;
use crate::stats::{quantile_sorted, sorted};
use crate::{Error, Result};

/// Shapes within this many combined interval half-widths count as equal.
pub const STABILITY_TOL: f64 = 1.0;

/// Number of points and percentile range of the default grid.
pub const DEFAULT_GRID_POINTS: usize = 20;
pub const DEFAULT_GRID_RANGE: (f64, f64) = (0.70, 0.99);

/// A candidate needs this many valid points (itself included) at or above it.
pub const MIN_STABLE_RUN: usize = 3;

/// A candidate with `n` exceedances is compared only with higher thresholds
/// that keep at least `n / COMPARISON_RATIO` exceedances.
pub const COMPARISON_RATIO: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityOptions {
    pub fit: FitOptions,
    pub n_bootstrap: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            n_bootstrap: 200,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub u: f64,
    pub n_exceedances: usize,
    pub valid: bool,
    pub xi: Option<f64>,
    pub sigma: Option<f64>,
    pub xi_ci: Option<ConfidenceInterval>,
    /// Why the point is invalid, if it is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl StabilityPoint {
    fn invalid(u: f64, n_exceedances: usize, reason: String) -> Self {
        Self {
            u,
            n_exceedances,
            valid: false,
            xi: None,
            sigma: None,
            xi_ci: None,
            reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCurve {
    pub points: Vec<StabilityPoint>,
}

impl StabilityCurve {
    pub fn thresholds(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.u).collect()
    }

    pub fn n_valid(&self) -> usize {
        self.points.iter().filter(|p| p.valid).count()
    }
}

/// `n` equally spaced sample quantiles between probabilities `lo` and `hi`.
pub fn quantile_grid(errors: &[f64], n: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if errors.is_empty() || n == 0 {
        return Err(Error::InvalidArgument("grid needs errors and at least one point".into()));
    }
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::InvalidArgument(format!("bad grid range [{lo}, {hi}]")));
    }
    let s = sorted(errors);
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    let mut grid: Vec<f64> = (0..n).map(|i| quantile_sorted(&s, lo + step * i as f64)).collect();
    grid.dedup();
    Ok(grid)
}

/// Twenty quantiles of `errors` from the 70th to the 99th percentile.
pub fn default_grid(errors: &[f64]) -> Result<Vec<f64>> {
    quantile_grid(errors, DEFAULT_GRID_POINTS, DEFAULT_GRID_RANGE.0, DEFAULT_GRID_RANGE.1)
}

/// Fits a GPD above every threshold in `thresholds` (ascending). Thresholds
/// with fewer than `options.fit.min_samples` exceedances, or whose fit or
/// bootstrap fails, are kept as invalid points.
pub fn stability_curve(errors: &[f64], thresholds: &[f64], options: &StabilityOptions) -> Result<StabilityCurve> {
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("no thresholds given".into()));
    }
    if thresholds.iter().any(|u| !u.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("thresholds must be finite and strictly ascending".into()));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let min_n = options.fit.min_samples.max(2);
    let points: Vec<StabilityPoint> = thresholds
        .par_iter()
        .enumerate()
        .map(|(i, &u)| {
            let exc: Vec<f64> = errors.iter().copied().filter(|&e| e > u).collect();
            let n = exc.len();
            if n < min_n {
                return StabilityPoint::invalid(u, n, format!("{n} exceedances, need {min_n}"));
            }
            let fit = |s: &[f64]| fit_gpd_mle(s, u, &options.fit);
            let point = fit(&exc).and_then(|f| {
                if !f.converged {
                    return Err(Error::NotConverged);
                }
                let b = bootstrap_ci(&exc, fit, options.n_bootstrap, options.level, derive_seed(options.seed, &[i as u64]))?;
                Ok((f, *b.xi()))
            });
            match point {
                Ok((f, ci)) => {
                    let v = f.params.values();
                    StabilityPoint {
                        u,
                        n_exceedances: n,
                        valid: true,
                        xi: Some(v[0]),
                        sigma: Some(v[1]),
                        xi_ci: Some(ci),
                        reason: None,
                    }
                }
                Err(e) => StabilityPoint::invalid(u, n, e.to_string()),
            }
        })
        .collect();
    let curve = StabilityCurve { points };
    if curve.n_valid() == 0 {
        return Err(Error::NoValidThreshold(format!(
            "none of {} thresholds has a usable fit",
            thresholds.len()
        )));
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSuggestion {
    pub u: f64,
    pub index: usize,
    /// False when no candidate met the stability rule and the least
    /// unstable point was returned instead.
    pub stable: bool,
    /// Largest `|xi_j - xi_i| / (hw_i + hw_j)` over the compared points above.
    pub max_normalized_deviation: f64,
    pub rationale: String,
}

fn xi_and_hw(p: &StabilityPoint) -> (f64, f64) {
    (p.xi.unwrap_or(f64::NAN), p.xi_ci.map_or(f64::NAN, |c| c.half_width()))
}

/// Smallest grid point whose shape estimate agrees with every valid estimate
/// above it: `|xi_j - xi_i| <= STABILITY_TOL * (hw_i + hw_j)`, where `hw` is
/// the bootstrap half-width at each point, i.e. the intervals overlap.
/// Estimates built on far fewer exceedances than the candidate's (see
/// [`COMPARISON_RATIO`]) are left out of the comparison. Only
/// points with at least [`MIN_STABLE_RUN`] valid points at or above them are
/// candidates. Without a stable candidate the one with the smallest worst
/// deviation is returned and flagged.
pub fn suggest_threshold(curve: &StabilityCurve) -> Result<ThresholdSuggestion> {
    let valid: Vec<usize> = (0..curve.points.len()).filter(|&i| curve.points[i].valid).collect();
    if valid.len() < MIN_STABLE_RUN {
        return Err(Error::NoValidThreshold(format!(
            "{} valid thresholds, need at least {MIN_STABLE_RUN}",
            valid.len()
        )));
    }
    let deviation = |k: usize| -> f64 {
        let (xi_i, hw_i) = xi_and_hw(&curve.points[valid[k]]);
        let n_i = curve.points[valid[k]].n_exceedances;
        valid[k + 1..]
            .iter()
            .filter(|&&j| curve.points[j].n_exceedances * COMPARISON_RATIO >= n_i)
            .map(|&j| {
                let (xi_j, hw_j) = xi_and_hw(&curve.points[j]);
                let scale = hw_i + hw_j;
                let d = (xi_j - xi_i).abs();
                if scale > 0.0 {
                    d / scale
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    };
    let candidates = valid.len() + 1 - MIN_STABLE_RUN;
    let devs: Vec<f64> = (0..candidates).map(deviation).collect();

    if let Some(k) = devs.iter().position(|&d| d <= STABILITY_TOL) {
        let p = &curve.points[valid[k]];
        return Ok(ThresholdSuggestion {
            u: p.u,
            index: valid[k],
            stable: true,
            max_normalized_deviation: devs[k],
            rationale: format!(
                "smallest threshold whose shape estimate ({:.4}) stays within {STABILITY_TOL} combined \
                 interval half-widths of the valid estimates above it",
                p.xi.unwrap_or(f64::NAN)
            ),
        });
    }
    let k = (0..candidates)
        .min_by(|&a, &b| devs[a].total_cmp(&devs[b]))
        .expect("at least one candidate");
    let p = &curve.points[valid[k]];
    Ok(ThresholdSuggestion {
        u: p.u,
        index: valid[k],
        stable: false,
        max_normalized_deviation: devs[k],
        rationale: format!(
            "no stable region: the shape estimate varies with the threshold; returning the point with \
             the smallest worst-case deviation ({:.3} half-widths); inspect the full curve",
            devs[k]
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sample_gpd, GpdParams};

    fn point(u: f64, xi: f64, hw: f64) -> StabilityPoint {
        StabilityPoint {
            u,
            n_exceedances: 100,
            valid: true,
            xi: Some(xi),
            sigma: Some(1.0),
            xi_ci: Some(ConfidenceInterval { lower: xi - hw, upper: xi + hw, level: 0.95, n_bootstrap: 200 }),
            reason: None,
        }
    }

    #[test]
    fn grid_spans_requested_quantiles() {
        let e: Vec<f64> = (0..=100).map(f64::from).collect();
        let g = default_grid(&e).unwrap();
        assert_eq!(g.len(), 20);
        assert!((g[0] - 70.0).abs() < 1e-9 && (g[19] - 99.0).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn counts_and_invalid_points() {
        let p = GpdParams::new(-0.3, 2.0, 0.0).unwrap();
        let e = sample_gpd(&p, 2_000, 3);
        let max = e.iter().copied().fold(f64::MIN, f64::max);
        let grid = [0.5, 1.0, max + 1.0];
        let c = stability_curve(&e, &grid, &StabilityOptions::default()).unwrap();
        for pt in &c.points {
            assert_eq!(pt.n_exceedances, e.iter().filter(|&&x| x > pt.u).count());
        }
        assert!(c.points[0].valid && c.points[1].valid);
        assert!(!c.points[2].valid);
        assert!(c.points.windows(2).all(|w| w[0].n_exceedances >= w[1].n_exceedances));
        assert!(matches!(
            stability_curve(&e, &[max + 1.0], &StabilityOptions::default()),
            Err(Error::NoValidThreshold(_))
        ));
        assert!(stability_curve(&e, &[1.0, 0.5], &StabilityOptions::default()).is_err());
    }

    #[test]
    fn exact_gpd_curve_is_flat() {
        let p = GpdParams::new(-0.3, 2.0, 0.0).unwrap();
        let e = sample_gpd(&p, 8_000, 9);
        let grid: Vec<f64> = (0..6).map(|k| 0.5 * k as f64).collect();
        let c = stability_curve(&e, &grid, &StabilityOptions::default()).unwrap();
        for pt in c.points.iter().filter(|p| p.n_exceedances >= 200) {
            assert!((pt.xi.unwrap() + 0.3).abs() < 0.1, "u={} xi={:?}", pt.u, pt.xi);
        }
    }

    #[test]
    fn rule_on_hand_made_curves() {
        let flat = StabilityCurve { points: (0..5).map(|i| point(i as f64, -0.3, 0.1)).collect() };
        let s = suggest_threshold(&flat).unwrap();
        assert!(s.stable);
        assert_eq!(s.index, 0);

        // jump at the two lowest points, flat afterwards
        let mut jump = flat.clone();
        jump.points[0] = point(0.0, 0.4, 0.05);
        jump.points[1] = point(1.0, 0.2, 0.05);
        let s = suggest_threshold(&jump).unwrap();
        assert_eq!(s.u, 2.0);

        // invalid points are skipped but keep their grid position
        let mut holes = flat.clone();
        holes.points[0].valid = false;
        assert_eq!(suggest_threshold(&holes).unwrap().index, 1);

        // an outlier built on few exceedances does not veto the lowest point
        let mut sparse = flat.clone();
        sparse.points[0].n_exceedances = 1_000;
        sparse.points[4] = point(4.0, 0.5, 0.1);
        sparse.points[4].n_exceedances = 50;
        assert_eq!(suggest_threshold(&sparse).unwrap().index, 0);

        let two = StabilityCurve { points: flat.points[..2].to_vec() };
        assert!(matches!(suggest_threshold(&two), Err(Error::NoValidThreshold(_))));

        // a steadily drifting curve has no stable point
        let drift = StabilityCurve { points: (0..6).map(|i| point(i as f64, 0.5 * i as f64, 0.01)).collect() };
        let s = suggest_threshold(&drift).unwrap();
        assert!(!s.stable);
        assert!([0.0, 1.0, 2.0, 3.0].contains(&s.u));
    }
}

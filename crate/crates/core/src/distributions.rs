//! Generalized extreme value (GEV) and generalized Pareto (GPD) families.
//!
//! GEV, for block maxima:
//!
//! ```text
//! G(z) = exp{ -[1 + ξ (z - μ)/σ]^(-1/ξ) },   defined where 1 + ξ (z - μ)/σ > 0
//! ```
//!
//! GPD, for values exceeding a threshold `u`:
//!
//! ```text
//! H(x) = 1 - [1 + ξ (x - u)/σ]^(-1/ξ),       x ≥ u  (x ≤ u - σ/ξ when ξ < 0)
//! ```
//!
//! For |ξ| < [`GUMBEL_EPS`] the ξ → 0 limits are evaluated instead (Gumbel for
//! the GEV, exponential for the GPD). Outside the support the CDFs are
//! clamped to 0 or 1 and the log-densities return `-inf`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{open_unit, stream};
use crate::{Error, Result};

/// Below this |ξ| the ξ → 0 limit forms are used.
pub const GUMBEL_EPS: f64 = 1e-8;

/// Tail type of a GEV distribution, determined by the sign of ξ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GevFamily {
    /// ξ < 0: bounded upper tail.
    Weibull,
    /// ξ = 0: light, exponentially decaying tail.
    Gumbel,
    /// ξ > 0: heavy, polynomially decaying tail.
    Frechet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub xi: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub xi: f64,
    pub sigma: f64,
    /// Threshold; the lower end of the support.
    pub u: f64,
}

fn check_prob(prob: f64) -> Result<()> {
    if prob > 0.0 && prob < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "probability must lie in (0, 1), got {prob}"
        )))
    }
}

fn check_scale(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "scale must be positive and finite, got {sigma}"
        )))
    }
}

impl GevParams {
    pub fn new(xi: f64, mu: f64, sigma: f64) -> Result<Self> {
        check_scale(sigma)?;
        if !xi.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidArgument("non-finite GEV parameter".into()));
        }
        Ok(Self { xi, mu, sigma })
    }

    pub fn family(&self) -> GevFamily {
        if self.xi < 0.0 {
            GevFamily::Weibull
        } else if self.xi > 0.0 {
            GevFamily::Frechet
        } else {
            GevFamily::Gumbel
        }
    }

    fn is_gumbel(&self) -> bool {
        self.xi.abs() < GUMBEL_EPS
    }

    /// Finite upper end of the support, present only for ξ < 0.
    pub fn upper_endpoint(&self) -> Option<f64> {
        (self.xi < 0.0 && !self.is_gumbel()).then(|| self.mu - self.sigma / self.xi)
    }

    /// Finite lower end of the support, present only for ξ > 0.
    pub fn lower_endpoint(&self) -> Option<f64> {
        (self.xi > 0.0 && !self.is_gumbel()).then(|| self.mu - self.sigma / self.xi)
    }

    pub fn in_support(&self, z: f64) -> bool {
        if self.is_gumbel() {
            return z.is_finite();
        }
        1.0 + self.xi * (z - self.mu) / self.sigma > 0.0
    }

    pub fn cdf(&self, z: f64) -> f64 {
        let y = (z - self.mu) / self.sigma;
        if self.is_gumbel() {
            return (-(-y).exp()).exp();
        }
        if let Some(top) = self.upper_endpoint() {
            if z >= top {
                return 1.0;
            }
        }
        let t = 1.0 + self.xi * y;
        if t <= 0.0 {
            // only reachable for ξ > 0, below the lower endpoint
            return if self.xi > 0.0 { 0.0 } else { 1.0 };
        }
        let log_t = (self.xi * y).ln_1p();
        (-(-log_t / self.xi).exp()).exp()
    }

    /// Closed-form inverse of [`GevParams::cdf`].
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        check_prob(prob)?;
        let w = (-prob.ln()).ln();
        if self.is_gumbel() {
            return Ok(self.mu - self.sigma * w);
        }
        Ok(self.mu + self.sigma / self.xi * (-self.xi * w).exp_m1())
    }

    pub fn logpdf(&self, z: f64) -> f64 {
        let y = (z - self.mu) / self.sigma;
        let log_sigma = self.sigma.ln();
        if self.is_gumbel() {
            return -log_sigma - y - (-y).exp();
        }
        let t = 1.0 + self.xi * y;
        if t <= 0.0 || !t.is_finite() {
            return f64::NEG_INFINITY;
        }
        let log_t = (self.xi * y).ln_1p();
        -log_sigma - (1.0 + 1.0 / self.xi) * log_t - (-log_t / self.xi).exp()
    }

    pub fn pdf(&self, z: f64) -> f64 {
        self.logpdf(z).exp()
    }

    /// Sum of log-densities; `-inf` as soon as one point leaves the support.
    pub fn log_likelihood(&self, sample: &[f64]) -> f64 {
        let n = sample.len() as f64;
        let inv_sigma = 1.0 / self.sigma;
        let mut total = -n * self.sigma.ln();
        if self.is_gumbel() {
            for &z in sample {
                let y = (z - self.mu) * inv_sigma;
                total -= y + (-y).exp();
            }
            return total;
        }
        let inv_xi = 1.0 / self.xi;
        for &z in sample {
            let y = (z - self.mu) * inv_sigma;
            if 1.0 + self.xi * y <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let log_t = (self.xi * y).ln_1p();
            total -= (1.0 + inv_xi) * log_t + (-log_t * inv_xi).exp();
        }
        total
    }

    /// Inverse-CDF draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // open_unit never returns 0 or 1, so the quantile is always defined
        self.quantile(open_unit(rng)).expect("probability in (0, 1)")
    }
}

impl GpdParams {
    pub fn new(xi: f64, sigma: f64, u: f64) -> Result<Self> {
        check_scale(sigma)?;
        if !xi.is_finite() || !u.is_finite() {
            return Err(Error::InvalidArgument("non-finite GPD parameter".into()));
        }
        Ok(Self { xi, sigma, u })
    }

    fn is_exponential(&self) -> bool {
        self.xi.abs() < GUMBEL_EPS
    }

    /// Finite upper end of the support, present only for ξ < 0.
    pub fn upper_endpoint(&self) -> Option<f64> {
        (self.xi < 0.0 && !self.is_exponential()).then(|| self.u - self.sigma / self.xi)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.u {
            return 0.0;
        }
        if let Some(top) = self.upper_endpoint() {
            if x >= top {
                return 1.0;
            }
        }
        let y = (x - self.u) / self.sigma;
        if self.is_exponential() {
            return -(-y).exp_m1();
        }
        let log_t = (self.xi * y).ln_1p();
        -(-log_t / self.xi).exp_m1()
    }

    /// Closed-form inverse of [`GpdParams::cdf`].
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        check_prob(prob)?;
        let log_survival = (-prob).ln_1p();
        if self.is_exponential() {
            return Ok(self.u - self.sigma * log_survival);
        }
        Ok(self.u + self.sigma / self.xi * (-self.xi * log_survival).exp_m1())
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        if x < self.u || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        let y = (x - self.u) / self.sigma;
        let log_sigma = self.sigma.ln();
        if self.is_exponential() {
            return -log_sigma - y;
        }
        let t = 1.0 + self.xi * y;
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -log_sigma - (1.0 + 1.0 / self.xi) * (self.xi * y).ln_1p()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.logpdf(x).exp()
    }

    pub fn log_likelihood(&self, sample: &[f64]) -> f64 {
        let n = sample.len() as f64;
        let inv_sigma = 1.0 / self.sigma;
        let mut total = -n * self.sigma.ln();
        let exponential = self.is_exponential();
        for &x in sample {
            if x < self.u || !x.is_finite() {
                return f64::NEG_INFINITY;
            }
            let y = (x - self.u) * inv_sigma;
            if exponential {
                total -= y;
            } else {
                if 1.0 + self.xi * y <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                total -= (1.0 + 1.0 / self.xi) * (self.xi * y).ln_1p();
            }
        }
        total
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(open_unit(rng)).expect("probability in (0, 1)")
    }
}

/// `n` i.i.d. GEV draws, deterministic per seed.
pub fn sample_gev(params: &GevParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[0x0067_6576]);
    (0..n).map(|_| params.draw(&mut rng)).collect()
}

/// `n` i.i.d. GPD draws, deterministic per seed.
pub fn sample_gpd(params: &GpdParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[0x0067_7064]);
    (0..n).map(|_| params.draw(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    const E_INV: f64 = 0.367_879_441_171_442_33;

    fn table_gev() -> GevParams {
        GevParams::new(-0.422, 20.734, 0.508).unwrap()
    }

    fn fig_gpd() -> GpdParams {
        GpdParams::new(-0.43, 3.57, 15.0).unwrap()
    }

    /// Independent inversion oracle: bisection on a monotone CDF.
    fn bisect(cdf: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Adaptive Simpson quadrature (test oracle).
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    /// Integrates a density between two quantile levels, splitting the range
    /// into pieces so the quadrature copes with long tails.
    fn mass_between(pdf: &dyn Fn(f64) -> f64, q: &dyn Fn(f64) -> f64, p_lo: f64, p_hi: f64) -> f64 {
        let pieces = 64;
        let knots: Vec<f64> = (0..=pieces)
            .map(|i| {
                let t = i as f64 / pieces as f64;
                q(p_lo + (p_hi - p_lo) * t)
            })
            .collect();
        knots.windows(2).map(|w| simpson(pdf, w[0], w[1], 1e-12)).sum()
    }

    #[test]
    fn gev_cdf_at_location_is_inverse_e() {
        let p = table_gev();
        assert!((p.cdf(p.mu) - E_INV).abs() < 1e-15);
        let g = GevParams::new(0.0, 0.0, 1.0).unwrap();
        assert!((g.cdf(0.0) - E_INV).abs() < 1e-15);
    }

    #[test]
    fn gev_table_quantile_matches_bisection() {
        let p = table_gev();
        let top = p.upper_endpoint().unwrap();
        let oracle = bisect(|z| p.cdf(z), 15.0, top, 0.95);
        // frozen from an independent bisection of the closed-form CDF
        assert!((oracle - 21.594_077_778).abs() < 1e-6);
        let q = p.quantile(0.95).unwrap();
        assert!((q - oracle).abs() < 1e-9);
        assert!((p.cdf(21.594) - 0.95).abs() < 1e-4);
    }

    #[test]
    fn gev_quantile_at_inverse_e_is_location() {
        for p in [table_gev(), GevParams::new(0.3, -2.0, 4.0).unwrap(), GevParams::new(0.0, 1.0, 2.0).unwrap()] {
            assert!((p.quantile(E_INV).unwrap() - p.mu).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_rejects_bad_probabilities() {
        let g = table_gev();
        let h = fig_gpd();
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(g.quantile(bad).is_err());
            assert!(h.quantile(bad).is_err());
        }
    }

    #[test]
    fn gev_logpdf_examples() {
        let g = GevParams::new(0.0, 0.0, 1.0).unwrap();
        assert!((g.logpdf(0.0) + 1.0).abs() < 1e-15);
        let w = GevParams::new(-0.5, 0.0, 1.0).unwrap();
        // support is z < 2
        assert_eq!(w.logpdf(2.5), f64::NEG_INFINITY);
        assert!(w.logpdf(1.0).is_finite());
        let f = GevParams::new(0.5, 0.0, 1.0).unwrap();
        assert_eq!(f.logpdf(-3.0), f64::NEG_INFINITY);
        assert_eq!(f.cdf(-3.0), 0.0);
    }

    #[test]
    fn gpd_examples() {
        let h = fig_gpd();
        assert_eq!(h.cdf(15.0), 0.0);
        let e = GpdParams::new(0.0, 2.0, 0.0).unwrap();
        assert!((e.cdf(2.0 * 2f64.ln()) - 0.5).abs() < 1e-15);

        let top = h.upper_endpoint().unwrap();
        let oracle = bisect(|x| h.cdf(x), 15.0, top, 0.95);
        assert!((oracle - 21.012_740_1).abs() < 1e-6);
        assert!((h.quantile(0.95).unwrap() - oracle).abs() < 1e-9);
        assert!((h.cdf(21.0) - 0.95).abs() < 1e-3);

        assert!((h.quantile(1e-15).unwrap() - 15.0).abs() < 1e-12);
        let unit = GpdParams::new(0.0, 1.0, 0.0).unwrap();
        assert!((unit.quantile(1.0 - (-1f64).exp()).unwrap() - 1.0).abs() < 1e-12);
        assert!(unit.logpdf(0.0).abs() < 1e-15);
        assert_eq!(unit.logpdf(-0.1), f64::NEG_INFINITY);
    }

    #[test]
    fn support_endpoints_are_exact() {
        let g = table_gev();
        assert_eq!(g.cdf(g.mu - g.sigma / g.xi), 1.0);
        let h = fig_gpd();
        assert_eq!(h.cdf(h.u - h.sigma / h.xi), 1.0);
    }

    #[test]
    fn family_follows_sign_of_shape() {
        assert_eq!(table_gev().family(), GevFamily::Weibull);
        assert_eq!(GevParams::new(0.0, 0.0, 1.0).unwrap().family(), GevFamily::Gumbel);
        assert_eq!(GevParams::new(0.2, 0.0, 1.0).unwrap().family(), GevFamily::Frechet);
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(GevParams::new(0.1, 0.0, 0.0).is_err());
        assert!(GpdParams::new(0.1, -1.0, 0.0).is_err());
    }

    #[test]
    fn densities_integrate_to_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let xi = rng.gen_range(-0.45..0.45);
            let mu = rng.gen_range(-10.0..10.0);
            let sigma = rng.gen_range(0.2..5.0);
            let (p_lo, p_hi) = (1e-12, 1.0 - 1e-12);

            let g = GevParams::new(xi, mu, sigma).unwrap();
            let mass = mass_between(&|z| g.pdf(z), &|p| g.quantile(p).unwrap(), p_lo, p_hi);
            assert!((mass - 1.0).abs() < 1e-6, "gev {g:?}: {mass}");

            let h = GpdParams::new(xi, sigma, mu).unwrap();
            let mass = mass_between(&|x| h.pdf(x), &|p| h.quantile(p).unwrap(), p_lo, p_hi);
            assert!((mass - 1.0).abs() < 1e-6, "gpd {h:?}: {mass}");
        }
    }

    #[test]
    fn log_likelihood_is_sum_of_logpdf() {
        for g in [table_gev(), GevParams::new(0.0, 1.0, 2.0).unwrap(), GevParams::new(0.3, 0.0, 1.0).unwrap()] {
            let xs = sample_gev(&g, 200, 4);
            let direct: f64 = xs.iter().map(|&z| g.logpdf(z)).sum();
            assert!((g.log_likelihood(&xs) - direct).abs() < 1e-9 * direct.abs());
            let mut out = xs.clone();
            out.push(g.upper_endpoint().map_or(-1e9, |t| t + 1.0));
            assert_eq!(g.log_likelihood(&out), f64::NEG_INFINITY);
        }
        for h in [fig_gpd(), GpdParams::new(0.0, 1.0, 2.0).unwrap()] {
            let xs = sample_gpd(&h, 200, 4);
            let direct: f64 = xs.iter().map(|&x| h.logpdf(x)).sum();
            assert!((h.log_likelihood(&xs) - direct).abs() < 1e-9 * direct.abs());
        }
    }

    #[test]
    fn sampler_is_deterministic_and_in_support() {
        let g = table_gev();
        let one = sample_gev(&g, 1, 3);
        assert_eq!(one.len(), 1);
        assert!(g.in_support(one[0]));
        assert_eq!(sample_gev(&g, 50, 9), sample_gev(&g, 50, 9));
        assert_ne!(sample_gev(&g, 50, 9), sample_gev(&g, 50, 10));
    }

    #[test]
    fn sampler_matches_cdf() {
        // Kolmogorov-Smirnov distance of 100k draws
        let g = GevParams::new(-0.3, 20.0, 0.5).unwrap();
        let mut xs = sample_gev(&g, 100_000, 1);
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = g.cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks = {ks}");
    }

    proptest! {
        #[test]
        fn cdfs_are_monotone(xi in -1.0f64..1.0, mu in -20.0f64..20.0, sigma in 0.05f64..10.0,
                             pairs in proptest::collection::vec((-60.0f64..60.0, -60.0f64..60.0), 1000)) {
            let g = GevParams::new(xi, mu, sigma).unwrap();
            let h = GpdParams::new(xi, sigma, mu).unwrap();
            for (a, b) in pairs {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(g.cdf(lo) <= g.cdf(hi));
                prop_assert!(h.cdf(lo) <= h.cdf(hi));
            }
        }

        #[test]
        fn quantile_inverts_cdf(xi in -1.0f64..1.0, mu in -20.0f64..20.0, sigma in 0.05f64..10.0) {
            let g = GevParams::new(xi, mu, sigma).unwrap();
            let h = GpdParams::new(xi, sigma, mu).unwrap();
            for i in 1..1000 {
                let p = i as f64 / 1000.0;
                prop_assert!((g.cdf(g.quantile(p).unwrap()) - p).abs() < 1e-9);
                prop_assert!((h.cdf(h.quantile(p).unwrap()) - p).abs() < 1e-9);
            }
        }

        #[test]
        fn cdf_round_trips_through_quantile(xi in -0.8f64..0.8, mu in -5.0f64..5.0, sigma in 0.1f64..5.0, p in 0.001f64..0.999) {
            let g = GevParams::new(xi, mu, sigma).unwrap();
            let z = g.quantile(p).unwrap();
            let back = g.quantile(g.cdf(z)).unwrap();
            prop_assert!((back - z).abs() <= 1e-8 * (1.0 + z.abs()));
        }

        #[test]
        fn gumbel_limit_is_continuous(mu in -10.0f64..10.0, sigma in 0.1f64..5.0, z in -10.0f64..30.0) {
            let near = GevParams::new(1e-9, mu, sigma).unwrap();
            let exact = GevParams::new(0.0, mu, sigma).unwrap();
            prop_assert!((near.cdf(z) - exact.cdf(z)).abs() < 1e-6);
            let near = GpdParams::new(1e-9, sigma, mu).unwrap();
            let exact = GpdParams::new(0.0, sigma, mu).unwrap();
            prop_assert!((near.cdf(z) - exact.cdf(z)).abs() < 1e-6);
            // just above the switch the general form must agree as well
            let above = GevParams::new(2e-8, mu, sigma).unwrap();
            let exact = GevParams::new(0.0, mu, sigma).unwrap();
            prop_assert!((above.cdf(z) - exact.cdf(z)).abs() < 1e-6);
        }

        #[test]
        fn weibull_endpoint_has_full_mass(xi in -2.0f64..-0.01, mu in -10.0f64..10.0, sigma in 0.1f64..5.0) {
            let g = GevParams::new(xi, mu, sigma).unwrap();
            prop_assert_eq!(g.cdf(mu - sigma / xi), 1.0);
            let h = GpdParams::new(xi, sigma, mu).unwrap();
            prop_assert_eq!(h.cdf(mu - sigma / xi), 1.0);
        }
    }
}

//! Estimators with standard errors, KS distances, trends and tail fits.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::sum::Neumaier;

/// Point estimate with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
    pub flags: Vec<String>,
}

impl EstimatorResult {
    pub fn exact(value: f64) -> Self {
        EstimatorResult {
            estimate: value,
            std_error: 0.0,
            n: 0,
            flags: Vec::new(),
        }
    }

    pub fn with_se(value: f64, se: f64, n: usize) -> Self {
        EstimatorResult {
            estimate: value,
            std_error: se,
            n,
            flags: Vec::new(),
        }
    }

    /// `|estimate - target| / se` (infinite when `se = 0` and they differ).
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.estimate - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }

    pub fn within(&self, target: f64, n_se: f64) -> bool {
        self.z_score(target) <= n_se
    }
}

fn nan_result(n: usize) -> EstimatorResult {
    EstimatorResult {
        estimate: f64::NAN,
        std_error: f64::NAN,
        n,
        flags: vec!["too few samples".into()],
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<Neumaier>().value() / xs.len() as f64
}

/// Sample mean, SE `s / sqrt(n)`.
pub fn mean_se(xs: &[f64]) -> EstimatorResult {
    let n = xs.len();
    if n < 2 {
        return nan_result(n);
    }
    let m = mean(xs);
    let s2 = xs.iter().map(|x| (x - m).powi(2)).collect::<Neumaier>().value() / (n - 1) as f64;
    EstimatorResult {
        estimate: m,
        std_error: (s2 / n as f64).sqrt(),
        n,
        flags: Vec::new(),
    }
}

/// Unbiased sample variance. The SE is that of the mean of
/// `(x_i - xbar)^2`, which also carries the centering noise to first order.
pub fn variance_se(xs: &[f64]) -> EstimatorResult {
    let n = xs.len();
    if n < 3 {
        return nan_result(n);
    }
    let m = mean(xs);
    let d2: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let sq = mean_se(&d2);
    let nf = n as f64;
    EstimatorResult {
        estimate: sq.estimate * nf / (nf - 1.0),
        std_error: sq.std_error * nf / (nf - 1.0),
        n,
        flags: Vec::new(),
    }
}

/// `E[x^2]` when `E[x] = mu` is known: `mu^2 + mean((x - mu)^2)`.
pub fn second_moment_known_mean(xs: &[f64], mu: f64) -> EstimatorResult {
    let d2: Vec<f64> = xs.iter().map(|x| (x - mu).powi(2)).collect();
    let mut r = mean_se(&d2);
    r.estimate += mu * mu;
    r
}

/// Ratio `a / b` of two estimates with independent errors (delta method).
pub fn ratio(a: &EstimatorResult, b: &EstimatorResult) -> EstimatorResult {
    let q = a.estimate / b.estimate;
    let rel = ((a.std_error / a.estimate).powi(2) + (b.std_error / b.estimate).powi(2)).sqrt();
    EstimatorResult {
        estimate: q,
        std_error: (q * rel).abs(),
        n: a.n,
        flags: Vec::new(),
    }
}

/// Sup distance between the empirical CDF of `samples` and `cdf`, any
/// sample size.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        // ties: the ECDF jumps once over the whole block
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max(f - i as f64 / n).max((j + 1) as f64 / n - f);
        i = j + 1;
    }
    d.clamp(0.0, 1.0)
}

/// Minimum sample size for [`ks_distance`].
pub const KS_MIN_SAMPLES: usize = 100;

pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.len() < KS_MIN_SAMPLES {
        return domain(format!(
            "KS distance needs at least {KS_MIN_SAMPLES} samples, got {}",
            samples.len()
        ));
    }
    Ok(ks_statistic(samples, cdf))
}

/// Scale `1 / sqrt(n)` of the KS null distribution, reported as the SE of
/// a KS distance.
pub fn ks_scale(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// Statistic across an `N` grid with a strict-decrease verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendReport {
    pub statistic: String,
    pub n_grid: Vec<usize>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub decreasing: bool,
    /// `d log|value| / d log N` between consecutive grid points.
    pub slopes: Vec<f64>,
}

impl TrendReport {
    pub fn new(statistic: &str, n_grid: &[usize], results: &[EstimatorResult]) -> Self {
        let values: Vec<f64> = results.iter().map(|r| r.estimate).collect();
        let decreasing = values.len() >= 2 && values.windows(2).all(|w| w[1] < w[0]);
        let slopes = n_grid
            .windows(2)
            .zip(values.windows(2))
            .map(|(n, v)| (v[1].abs().ln() - v[0].abs().ln()) / ((n[1] as f64).ln() - (n[0] as f64).ln()))
            .collect();
        TrendReport {
            statistic: statistic.to_string(),
            n_grid: n_grid.to_vec(),
            values,
            std_errors: results.iter().map(|r| r.std_error).collect(),
            decreasing,
            slopes,
        }
    }

    /// `|value - target|` decreasing along the grid.
    pub fn toward(statistic: &str, n_grid: &[usize], results: &[EstimatorResult], target: f64) -> Self {
        let gaps: Vec<EstimatorResult> = results
            .iter()
            .map(|r| EstimatorResult {
                estimate: (r.estimate - target).abs(),
                ..r.clone()
            })
            .collect();
        TrendReport::new(statistic, n_grid, &gaps)
    }
}

/// Envelope `P(log Z <= -t) ~ c1 exp(-t^g / c2)` fitted to the empirical
/// left tail.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailFit {
    pub c1: f64,
    pub c2: f64,
    pub exponent: f64,
    pub t_grid: Vec<f64>,
    pub exceedance: Vec<f64>,
    pub counts: Vec<usize>,
    /// Grid points used by the fit (at least `min_count` exceedances).
    pub fitted: usize,
    /// Largest `exceedance / envelope` over the fitted points.
    pub worst_ratio: f64,
}

impl TailFit {
    pub fn envelope(&self, t: f64) -> f64 {
        self.c1 * (-t.max(0.0).powf(self.exponent) / self.c2).exp()
    }
}

/// Least squares of `log P(t) = log c1 - t^g / c2` over `t > 0` grid
/// points with at least `min_count` exceedances; `g` by a golden-section
/// search on `[0.5, 6]`.
pub fn fit_left_tail(log_z: &[f64], t_grid: &[f64], min_count: usize) -> Result<TailFit> {
    let n = log_z.len();
    if n == 0 {
        return domain("no samples for the tail fit");
    }
    let counts: Vec<usize> = t_grid
        .iter()
        .map(|&t| log_z.iter().filter(|&&l| l <= -t).count())
        .collect();
    let exceedance: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let pts: Vec<(f64, f64)> = t_grid
        .iter()
        .zip(&counts)
        .filter(|(&t, &c)| t > 0.0 && c >= min_count)
        .map(|(&t, &c)| (t, (c as f64 / n as f64).ln()))
        .collect();
    if pts.len() < 3 {
        return domain(format!(
            "only {} tail points with at least {min_count} exceedances",
            pts.len()
        ));
    }
    // for fixed g: y = a - b t^g, linear in (a, b)
    let solve = |g: f64| -> (f64, f64, f64) {
        let k = pts.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &(t, y) in &pts {
            let x = t.powf(g);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
        let a = (sy - slope * sx) / k;
        let sse: f64 = pts.iter().map(|&(t, y)| (y - a - slope * t.powf(g)).powi(2)).sum();
        (a, -slope, sse)
    };
    let (mut lo, mut hi) = (0.5f64, 6.0f64);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (solve(x1).2, solve(x2).2);
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = solve(x1).2;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = solve(x2).2;
        }
    }
    let g = 0.5 * (lo + hi);
    let (a, b, _) = solve(g);
    if !(b > 0.0) {
        return domain("fitted tail does not decay");
    }
    let mut fit = TailFit {
        c1: a.exp(),
        c2: 1.0 / b,
        exponent: g,
        t_grid: t_grid.to_vec(),
        exceedance,
        counts,
        fitted: pts.len(),
        worst_ratio: 0.0,
    };
    fit.worst_ratio = pts
        .iter()
        .map(|&(t, y)| y.exp() / fit.envelope(t))
        .fold(0.0, f64::max);
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Exp, Normal};

    #[test]
    fn ks_single_sample() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for x in [-1.3, 0.0, 0.4, 2.0] {
            let f = n.cdf(x);
            let d = ks_statistic(&[x], |t| n.cdf(t));
            assert!((d - f.max(1.0 - f)).abs() < 1e-15);
        }
        assert!(ks_distance(&[0.0; 10], |t| n.cdf(t)).is_err());
    }

    #[test]
    fn ks_constant_and_null() {
        let e = Exp::new(1.0).unwrap();
        assert!(ks_distance(&[1.0; 200], |t| e.cdf(t)).unwrap() >= 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..10_000).map(|_| -rng.random::<f64>().ln()).collect();
        assert!(ks_distance(&xs, |t| e.cdf(t)).unwrap() <= 0.03);
    }

    #[test]
    fn moments_and_errors() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let m = mean_se(&xs);
        assert_eq!(m.estimate, 2.5);
        assert!((m.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let v = variance_se(&xs);
        assert!((v.estimate - 5.0 / 3.0).abs() < 1e-15);
        assert!(v.std_error >= 0.0);
        let s = second_moment_known_mean(&xs, 0.0);
        assert!((s.estimate - 7.5).abs() < 1e-15);
        assert!(mean_se(&[1.0]).estimate.is_nan());
    }

    #[test]
    fn trend_verdicts() {
        let r = |v: f64| EstimatorResult { estimate: v, std_error: 0.1, n: 10, flags: vec![] };
        let t = TrendReport::new("x", &[10, 100], &[r(2.0), r(1.0)]);
        assert!(t.decreasing);
        assert!((t.slopes[0] + 2f64.ln() / 10f64.ln()).abs() < 1e-12);
        assert!(!TrendReport::new("x", &[10, 100], &[r(1.0), r(1.0)]).decreasing);
        assert!(TrendReport::toward("x", &[1, 2, 3], &[r(0.5), r(1.2), r(0.95)], 1.0).decreasing);
    }

    #[test]
    fn tail_fit_recovers_gaussian_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..50_000)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let grid: Vec<f64> = (0..=40).map(|i| 0.1 * i as f64).collect();
        let fit = fit_left_tail(&xs, &grid, 20).unwrap();
        assert!(fit.exponent > 1.2 && fit.exponent < 2.6, "{}", fit.exponent);
        assert!(fit.worst_ratio < 1.5);
        assert!(fit.exceedance[0] <= 1.0);
        assert!(fit_left_tail(&[1.0; 100], &grid, 20).is_err());
    }
}

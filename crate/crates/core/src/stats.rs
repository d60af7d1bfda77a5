//! Bootstrap confidence intervals, Pearson correlation with t-test stars and
//! least-squares line fits.

use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub median: f64,
    pub lower_95: f64,
    pub upper_95: f64,
    pub resamples: usize,
    pub seed: u64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap of the median.
///
/// Resample `b` draws its `n` indices consecutively from one SplitMix64
/// stream seeded with `seed` (see [`crate::rng`]); the interval ends are the
/// 2.5th and 97.5th linear-interpolation percentiles of the resample medians.
pub fn bootstrap_median_ci(
    samples: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapCi, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if resamples == 0 {
        return Err(StatsError::DegenerateInput("zero resamples".into()));
    }
    let n = samples.len();
    let mut rng = SplitMix64::new(seed);
    let mut buf = vec![0.0; n];
    let mut medians = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for slot in buf.iter_mut() {
            *slot = samples[rng.index(n)];
        }
        buf.sort_by(f64::total_cmp);
        medians.push(median_sorted(&buf));
    }
    medians.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        median: median(samples),
        lower_95: percentile_sorted(&medians, 0.025),
        upper_95: percentile_sorted(&medians, 0.975),
        resamples,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stars {
    None,
    One,
    Two,
    Three,
}

impl Stars {
    /// Two-sided p-value thresholds 0.05 / 0.025 / 0.001.
    pub fn from_p_value(p: f64) -> Self {
        if p < 0.001 {
            Stars::Three
        } else if p < 0.025 {
            Stars::Two
        } else if p < 0.05 {
            Stars::One
        } else {
            Stars::None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stars::None => "",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        }
    }
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    /// Infinite when |rho| = 1.
    pub t_stat: f64,
    pub n: usize,
    pub p_value: f64,
    pub significance_stars: Stars,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::DegenerateInput(format!(
            "length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::DegenerateInput(format!(
            "need at least 3 pairs, got {n}"
        )));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateInput("zero variance".into()));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let t_stat = if rho.abs() == 1.0 {
        rho * f64::INFINITY
    } else {
        rho * df.sqrt() / (1.0 - rho * rho).sqrt()
    };
    let p_value = two_sided_p(t_stat, df);
    Ok(CorrelationResult {
        rho,
        t_stat,
        n,
        p_value,
        significance_stars: Stars::from_p_value(p_value),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFitResult {
    pub omega: f64,
    pub intercept: f64,
    /// t statistic of the slope. Zero residuals give an infinite value (or 0
    /// for a zero slope).
    pub t_stat: f64,
    pub p_value: f64,
    pub significant_at_005: bool,
    pub through_origin: bool,
}

/// Least-squares line `y = omega x (+ intercept)`.
pub fn linear_fit(
    x: &[f64],
    y: &[f64],
    through_origin: bool,
) -> Result<LinearFitResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::DegenerateInput(format!(
            "length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    let min_n = if through_origin { 2 } else { 3 };
    if n < min_n {
        return Err(StatsError::DegenerateInput(format!(
            "need at least {min_n} points, got {n}"
        )));
    }

    let (omega, intercept, sxx, df) = if through_origin {
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        if sxx == 0.0 {
            return Err(StatsError::DegenerateInput(
                "sum of squared levels is zero".into(),
            ));
        }
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        (sxy / sxx, 0.0, sxx, (n - 1) as f64)
    } else {
        let (mx, my) = (mean(x), mean(y));
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        if sxx == 0.0 {
            return Err(StatsError::DegenerateInput(
                "zero variance in levels".into(),
            ));
        }
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let omega = sxy / sxx;
        (omega, my - omega * mx, sxx, (n - 2) as f64)
    };

    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - omega * a - intercept).powi(2))
        .sum();
    let se = (rss / df / sxx).sqrt();
    let t_stat = if se > 0.0 {
        omega / se
    } else if omega == 0.0 {
        0.0
    } else {
        omega.signum() * f64::INFINITY
    };
    let p_value = two_sided_p(t_stat, df);
    Ok(LinearFitResult {
        omega,
        intercept,
        t_stat,
        p_value,
        significant_at_005: p_value < 0.05,
        through_origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_and_single_samples() {
        let ci = bootstrap_median_ci(&[5.0; 4], 1000, 1).unwrap();
        assert_eq!((ci.median, ci.lower_95, ci.upper_95), (5.0, 5.0, 5.0));
        let ci = bootstrap_median_ci(&[2.5], 1000, 1).unwrap();
        assert_eq!((ci.median, ci.lower_95, ci.upper_95), (2.5, 2.5, 2.5));
        assert_eq!(
            bootstrap_median_ci(&[], 10, 1),
            Err(StatsError::EmptySample)
        );
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(pearson(&x, &x).unwrap().rho, 1.0);
        let neg: Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert_eq!(pearson(&x, &neg).unwrap().rho, -1.0);

        let r = pearson(&x, &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!((r.rho - 0.8).abs() < 1e-12);
        assert!((r.t_stat - 2.309_401_076_758_503).abs() < 1e-9);
        assert_eq!(r.n, 5);
    }

    #[test]
    fn pearson_degenerate() {
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn star_thresholds_against_tabulated_critical_values() {
        // two-sided critical t values (df = 10) at 0.05, 0.025, 0.001
        let crit = [
            (2.228_138_851_986_274, Stars::One),
            (2.633_766_915_401_937, Stars::Two),
            (4.586_893_858_811_767, Stars::Three),
        ];
        let below = [Stars::None, Stars::One, Stars::Two];
        for ((t, above), under) in crit.iter().zip(below) {
            assert_eq!(Stars::from_p_value(two_sided_p(t * 1.001, 10.0)), *above);
            assert_eq!(Stars::from_p_value(two_sided_p(t * 0.999, 10.0)), under);
        }
    }

    #[test]
    fn linear_fit_examples() {
        let f = linear_fit(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], true).unwrap();
        assert_eq!(f.omega, 2.0);
        assert_eq!(f.intercept, 0.0);
        assert!(f.significant_at_005);
        let f = linear_fit(&[1.0, 2.0], &[0.0, 0.0], true).unwrap();
        assert_eq!(f.omega, 0.0);
        assert!(!f.significant_at_005);
        assert!(linear_fit(&[0.0, 0.0], &[1.0, 2.0], true).is_err());
        assert!(linear_fit(&[1.0], &[1.0], true).is_err());
    }

    proptest! {
        #[test]
        fn pearson_affine(xs in proptest::collection::vec(-100.0f64..100.0, 3..30), a in -5.0f64..5.0, b in -50.0f64..50.0) {
            prop_assume!(a.abs() > 1e-3);
            let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let r = pearson(&xs, &ys).unwrap();
            prop_assert!((r.rho - a.signum()).abs() < 1e-9);
        }

        #[test]
        fn bootstrap_deterministic_and_ordered(xs in proptest::collection::vec(-10.0f64..10.0, 1..25), seed in any::<u64>()) {
            let a = bootstrap_median_ci(&xs, 300, seed).unwrap();
            let b = bootstrap_median_ci(&xs, 300, seed).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a.lower_95 <= a.upper_95);
        }

        #[test]
        fn origin_fit_recovers_slope(xs in proptest::collection::vec(1.0f64..9.0, 2..40), w in -3.0f64..3.0) {
            let ys: Vec<f64> = xs.iter().map(|x| w * x).collect();
            let f = linear_fit(&xs, &ys, true).unwrap();
            prop_assert!((f.omega - w).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }

    #[test]
    fn median_inside_interval_almost_always() {
        let mut inside = 0;
        let total = 200;
        let mut rng = SplitMix64::new(99);
        for case in 0..total {
            let n = 3 + case % 20;
            let xs: Vec<f64> = (0..n).map(|_| rng.index(1000) as f64 / 10.0).collect();
            let ci = bootstrap_median_ci(&xs, 500, case as u64).unwrap();
            if ci.lower_95 <= ci.median && ci.median <= ci.upper_95 {
                inside += 1;
            }
        }
        assert!(inside as f64 >= 0.99 * total as f64, "{inside}/{total}");
    }
}

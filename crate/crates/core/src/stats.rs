//! Interval and summary statistics shared by the estimators and the simulator.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Gamma, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    Wilson,
    ExactBinomial,
    ExactPoisson,
}

impl IntervalMethod {
    pub fn label(&self) -> &'static str {
        match self {
            IntervalMethod::Wilson => "wilson",
            IntervalMethod::ExactBinomial => "exact-binomial",
            IntervalMethod::ExactPoisson => "exact-poisson",
        }
    }
}

/// A point estimate with a two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

impl EstimateWithInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Multiplies point and bounds by a positive factor.
    pub fn scaled(self, factor: f64) -> Self {
        EstimateWithInterval {
            point: self.point * factor,
            lower: self.lower * factor,
            upper: self.upper * factor,
            ..self
        }
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("confidence level {level} must be in (0,1)")))
    }
}

/// Two-sided standard normal quantile for `level`.
pub fn z_for_level(level: f64) -> Result<f64> {
    check_level(level)?;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: u64, trials: u64, level: f64) -> Result<EstimateWithInterval> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if successes > trials {
        return Err(Error::InvalidArgument("successes exceed trials".into()));
    }
    let z = z_for_level(level)?;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let (mut lower, mut upper) = ((centre - half).clamp(0.0, 1.0), (centre + half).clamp(0.0, 1.0));
    // The bounds equal the point exactly at the boundaries; rounding must not push past it.
    if successes == 0 {
        lower = 0.0;
    }
    if successes == trials {
        upper = 1.0;
    }
    Ok(EstimateWithInterval {
        point: p,
        lower: lower.min(p),
        upper: upper.max(p),
        level,
        method: IntervalMethod::Wilson,
    })
}

/// Clopper-Pearson interval from beta quantiles.
pub fn clopper_pearson(successes: u64, trials: u64, level: f64) -> Result<EstimateWithInterval> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if successes > trials {
        return Err(Error::InvalidArgument("successes exceed trials".into()));
    }
    check_level(level)?;
    let alpha = 1.0 - level;
    let (k, n) = (successes as f64, trials as f64);
    let lower =
        if successes == 0 { 0.0 } else { Beta::new(k, n - k + 1.0).expect("beta shape").inverse_cdf(alpha / 2.0) };
    let upper = if successes == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).expect("beta shape").inverse_cdf(1.0 - alpha / 2.0)
    };
    let p = k / n;
    Ok(EstimateWithInterval {
        point: p,
        lower: lower.min(p),
        upper: upper.max(p),
        level,
        method: IntervalMethod::ExactBinomial,
    })
}

/// Exact (Garwood) interval for a Poisson mean given one observed count.
pub fn poisson_exact(count: u64, level: f64) -> Result<EstimateWithInterval> {
    check_level(level)?;
    let alpha = 1.0 - level;
    let k = count as f64;
    let lower = if count == 0 { 0.0 } else { Gamma::new(k, 1.0).expect("gamma shape").inverse_cdf(alpha / 2.0) };
    let upper = Gamma::new(k + 1.0, 1.0).expect("gamma shape").inverse_cdf(1.0 - alpha / 2.0);
    Ok(EstimateWithInterval {
        point: k,
        lower: lower.min(k),
        upper: upper.max(k),
        level,
        method: IntervalMethod::ExactPoisson,
    })
}

/// Linear-interpolation quantile of already sorted data (`q` in `[0,1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Across-replication summary of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub sd: f64,
    pub p2_5: f64,
    pub p50: f64,
    pub p97_5: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: 0.0, sd: 0.0, p2_5: 0.0, p50: 0.0, p97_5: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd =
            if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Summary {
            mean,
            sd,
            p2_5: quantile_sorted(&sorted, 0.025),
            p50: quantile_sorted(&sorted, 0.5),
            p97_5: quantile_sorted(&sorted, 0.975),
        }
    }

    /// Standard error of the mean for `n` replications.
    pub fn std_error(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.sd / (n as f64).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Poisson CDF by direct summation.
    fn poisson_cdf(k: u64, mu: f64) -> f64 {
        let mut term = (-mu).exp();
        let mut sum = term;
        for i in 1..=k {
            term *= mu / i as f64;
            sum += term;
        }
        sum
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo).signum() == f(mid).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn poisson_interval_matches_summation_oracle() {
        for k in [0u64, 1, 2, 5, 17] {
            let est = poisson_exact(k, 0.95).unwrap();
            let upper = bisect(|mu| poisson_cdf(k, mu) - 0.025, 0.0, 100.0);
            assert!((est.upper - upper).abs() < 1e-6, "k={k} {} vs {upper}", est.upper);
            if k > 0 {
                let lower = bisect(|mu| 1.0 - poisson_cdf(k - 1, mu) - 0.025, 0.0, 100.0);
                assert!((est.lower - lower).abs() < 1e-6, "k={k} {} vs {lower}", est.lower);
            }
        }
        let one = poisson_exact(1, 0.95).unwrap();
        assert!((one.lower - 0.0253).abs() < 1e-4 && (one.upper - 5.5716).abs() < 1e-3);
        assert!((poisson_exact(0, 0.95).unwrap().upper - 3.6889).abs() < 1e-4);
    }

    #[test]
    fn wilson_against_direct_formula_and_exact() {
        let w = wilson(19, 20, 0.95).unwrap();
        assert!((w.point - 0.95).abs() < 1e-12);
        assert!((w.lower - 0.7639).abs() < 1e-3, "{}", w.lower);
        assert!((w.upper - 0.9911).abs() < 1e-3, "{}", w.upper);
        let cp = clopper_pearson(19, 20, 0.95).unwrap();
        // Exact interval is wider but of the same location.
        assert!(cp.lower < w.lower && cp.upper > w.upper - 0.01);
        assert!((cp.lower - 0.7513).abs() < 1e-3 && (cp.upper - 0.9987).abs() < 1e-3);
    }

    #[test]
    fn wilson_boundaries() {
        let w = wilson(0, 10, 0.95).unwrap();
        assert_eq!((w.point, w.lower), (0.0, 0.0));
        let w = wilson(10, 10, 0.95).unwrap();
        assert_eq!((w.point, w.upper), (1.0, 1.0));
        assert!(wilson(0, 0, 0.95).is_err());
        assert!(wilson(3, 2, 0.95).is_err());
        assert!(wilson(1, 2, 1.0).is_err());
    }

    #[test]
    fn summary_basics() {
        let s = Summary::of(&[3.0]);
        assert_eq!((s.mean, s.sd, s.p2_5, s.p50, s.p97_5), (3.0, 0.0, 3.0, 3.0, 3.0));
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.p50, 2.5);
        assert!((s.sd - 1.2909944487358056).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn wilson_contains_point(trials in 1u64..500, frac in 0.0f64..=1.0, level in 0.5f64..0.999) {
            let k = ((trials as f64) * frac).round() as u64;
            let w = wilson(k, trials, level).unwrap();
            proptest::prop_assert!(w.lower <= w.point && w.point <= w.upper);
            proptest::prop_assert!(w.lower >= 0.0 && w.upper <= 1.0);
        }
    }
}

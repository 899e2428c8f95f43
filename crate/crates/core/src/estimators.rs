//! Estimators for random re-checks, random re-screening and covert testing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::stats::{self, EstimateWithInterval};

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {p} out of [0,1]")))
    }
}

/// Fraction never picked after `years` of independent annual re-checks with probability `p`.
pub fn unchecked_fraction(p: f64, years: u32) -> Result<f64> {
    check_prob("recheck probability", p)?;
    Ok((1.0 - p).powi(years as i32))
}

/// Fraction unchecked if the same budget were spent rotating through staff
/// without replacement.
pub fn rotation_unchecked_fraction(p: f64, years: u32) -> Result<f64> {
    check_prob("recheck probability", p)?;
    Ok((1.0 - p * years as f64).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageOracle {
    pub mean_unchecked: f64,
    /// Standard error of `mean_unchecked` over the trials.
    pub std_error: f64,
    pub trials: usize,
}

/// Brute-force simulation: each employee is drawn each year with probability `p`.
pub fn coverage_oracle(
    n_employees: usize,
    p: f64,
    years: u32,
    trials: usize,
    stream: &mut Stream,
) -> Result<CoverageOracle> {
    check_prob("recheck probability", p)?;
    if n_employees == 0 {
        return Err(Error::InvalidArgument("need at least one employee".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let mut fractions = Vec::with_capacity(trials);
    let mut checked = vec![false; n_employees];
    for _ in 0..trials {
        checked.iter_mut().for_each(|c| *c = false);
        for _ in 0..years {
            for c in checked.iter_mut() {
                if stream.random::<f64>() < p {
                    *c = true;
                }
            }
        }
        let unchecked = checked.iter().filter(|&&c| !c).count();
        fractions.push(unchecked as f64 / n_employees as f64);
    }
    let summary = stats::Summary::of(&fractions);
    Ok(CoverageOracle { mean_unchecked: summary.mean, std_error: summary.std_error(trials), trials })
}

/// Expected number of items found by randomly re-screening cleared patrons.
pub fn compex_expected_finds(
    carried: f64,
    primary_detection: f64,
    resample_fraction: f64,
    secondary_detection: f64,
) -> Result<f64> {
    if !(carried >= 0.0 && carried.is_finite()) {
        return Err(Error::InvalidArgument("carried count must be non-negative".into()));
    }
    check_prob("primary detection", primary_detection)?;
    check_prob("resample fraction", resample_fraction)?;
    check_prob("secondary detection", secondary_detection)?;
    Ok(carried * (1.0 - primary_detection) * resample_fraction * secondary_detection)
}

fn check_resample(resample_fraction: f64, secondary_detection: f64) -> Result<()> {
    if !(resample_fraction > 0.0 && resample_fraction <= 1.0) {
        return Err(Error::InvalidArgument("resample fraction must be in (0,1]".into()));
    }
    if !(secondary_detection > 0.0 && secondary_detection <= 1.0) {
        return Err(Error::InvalidArgument("secondary detection must be in (0,1]".into()));
    }
    Ok(())
}

/// Point estimate of total missed contraband from a (possibly fractional) find count.
pub fn compex_point(found: f64, resample_fraction: f64, secondary_detection: f64) -> Result<f64> {
    if found < 0.0 {
        return Err(Error::InvalidArgument("found count must be non-negative".into()));
    }
    check_resample(resample_fraction, secondary_detection)?;
    Ok(found / (resample_fraction * secondary_detection))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompexEstimate {
    pub missed_total: EstimateWithInterval,
    /// Interval width relative to the point estimate, or `None` for a zero point.
    pub relative_width: Option<f64>,
    pub note: String,
}

/// Estimates the total missed contraband from items found in a random re-screen.
pub fn compex_estimate(
    found: i64,
    resample_fraction: f64,
    secondary_detection: f64,
    level: f64,
) -> Result<CompexEstimate> {
    if found < 0 {
        return Err(Error::InvalidArgument("found count must be non-negative".into()));
    }
    check_resample(resample_fraction, secondary_detection)?;
    let scale = 1.0 / (resample_fraction * secondary_detection);
    let count = stats::poisson_exact(found as u64, level)?;
    let mut missed_total = count.scaled(scale);
    missed_total.point = compex_point(found as f64, resample_fraction, secondary_detection)?;
    let relative_width = (missed_total.point > 0.0).then(|| missed_total.width() / missed_total.point);
    let note = if found == 0 {
        format!("nothing found; up to {:.1} missed items remain consistent with the data", missed_total.upper)
    } else {
        format!(
            "{found} found scales to {:.1} missed; interval spans {:.1} items, too wide for a precise miss rate",
            missed_total.point,
            missed_total.width()
        )
    };
    Ok(CompexEstimate { missed_total, relative_width, note })
}

/// Wilson interval on a covert-test detection rate.
pub fn redteam_rate(detected: u64, trials: u64, level: f64) -> Result<EstimateWithInterval> {
    stats::wilson(detected, trials, level)
}

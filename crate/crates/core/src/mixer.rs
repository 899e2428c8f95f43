//! Mixing arithmetic, the detection/delay frontier and the budget planner.
//!
//! Each patron is assigned a practice at random, so a plan's detection and
//! mean screening time are the weight-averaged values of its practices. The
//! achievable `(time, detection)` pairs are therefore the convex hull of the
//! practice points, and the best plan under a time budget lies on the upper
//! hull, mixing at most two adjacent vertices.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{effective_detection, validate_practices, MixPlan, Practice};

/// Slack for comparing a budget against a vertex time.
const TIME_EPS: f64 = 1e-12;

pub fn mix_detection(plan: &MixPlan, practices: &[Practice]) -> Result<f64> {
    Ok(plan.resolve(practices)?.into_iter().map(|(p, w)| w * effective_detection(p)).sum())
}

pub fn mix_mean_time(plan: &MixPlan, practices: &[Practice]) -> Result<f64> {
    Ok(plan.resolve(practices)?.into_iter().map(|(p, w)| w * p.mean_time_s()).sum())
}

/// Relative drop in missed threats when moving from `baseline` alone to `plan`.
pub fn miss_reduction(baseline: &Practice, plan: &MixPlan, practices: &[Practice]) -> Result<f64> {
    let miss_baseline = 1.0 - effective_detection(baseline);
    if miss_baseline <= 0.0 {
        return Err(Error::ZeroBaselineMisses(baseline.id.clone()));
    }
    let miss_plan = 1.0 - mix_detection(plan, practices)?;
    Ok((miss_baseline - miss_plan) / miss_baseline)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub mean_time_s: f64,
    pub detection: f64,
    pub plan: MixPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetQuery {
    pub max_mean_time_s: f64,
    /// Minimal acceptable detection; never defaulted.
    pub min_detection: Option<f64>,
}

impl BudgetQuery {
    pub fn new(max_mean_time_s: f64) -> Result<Self> {
        if !(max_mean_time_s > 0.0 && max_mean_time_s.is_finite()) {
            return Err(Error::InvalidArgument("budget must be a positive number of seconds".into()));
        }
        Ok(BudgetQuery { max_mean_time_s, min_detection: None })
    }

    pub fn with_min_detection(mut self, min_detection: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&min_detection) {
            return Err(Error::InvalidArgument("minimum detection must be in [0,1]".into()));
        }
        self.min_detection = Some(min_detection);
        Ok(self)
    }
}

struct Candidate<'a> {
    time: f64,
    detection: f64,
    practice: &'a Practice,
}

/// Cross product of `o->a` and `o->b` in (time, detection) space.
fn cross(o: &Candidate, a: &Candidate, b: &Candidate) -> f64 {
    (a.time - o.time) * (b.detection - o.detection) - (a.detection - o.detection) * (b.time - o.time)
}

/// The upper-left hull of practice points: vertices with strictly increasing
/// mean time and strictly increasing detection, each a pure plan.
pub fn efficient_frontier(practices: &[Practice]) -> Result<Vec<FrontierPoint>> {
    if practices.is_empty() {
        return Err(Error::NoPractices);
    }
    validate_practices(practices)?;

    let mut pts: Vec<Candidate> = practices
        .iter()
        .map(|p| Candidate { time: p.mean_time_s(), detection: effective_detection(p), practice: p })
        .collect();
    pts.sort_by(|a, b| {
        a.time
            .partial_cmp(&b.time)
            .unwrap_or(Ordering::Equal)
            .then(b.detection.partial_cmp(&a.detection).unwrap_or(Ordering::Equal))
            .then_with(|| a.practice.id.cmp(&b.practice.id))
    });
    // Equal time: the first one (highest detection, smallest id) wins.
    pts.dedup_by(|later, earlier| later.time == earlier.time);

    let mut hull: Vec<Candidate> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) >= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    // Past the most sensitive vertex the hull turns down; those points are dominated.
    let keep = hull.windows(2).take_while(|w| w[1].detection > w[0].detection).count() + 1;
    hull.truncate(keep);

    Ok(hull
        .into_iter()
        .map(|c| FrontierPoint {
            mean_time_s: c.time,
            detection: c.detection,
            plan: MixPlan::pure(c.practice.id.clone()),
        })
        .collect())
}

/// Frontier detection at `time_s`; `None` below the fastest vertex.
pub fn frontier_detection_at(frontier: &[FrontierPoint], time_s: f64) -> Option<f64> {
    let first = frontier.first()?;
    if time_s < first.mean_time_s - TIME_EPS {
        return None;
    }
    for w in frontier.windows(2) {
        if time_s <= w[1].mean_time_s {
            let f = (time_s - w[0].mean_time_s) / (w[1].mean_time_s - w[0].mean_time_s);
            let f = f.clamp(0.0, 1.0);
            return Some(f * w[1].detection + (1.0 - f) * w[0].detection);
        }
    }
    frontier.last().map(|p| p.detection)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanChoice {
    pub plan: MixPlan,
    pub mean_time_s: f64,
    pub detection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Infeasible {
    /// No practice is fast enough.
    BudgetBelowFastest { budget_s: f64, fastest_s: f64, gap_s: f64 },
    /// The best plan within budget is below the minimal acceptable detection.
    DetectionBelowMinimum { best: PlanChoice, required: f64, gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BudgetOutcome {
    Feasible(PlanChoice),
    Infeasible(Infeasible),
}

impl BudgetOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, BudgetOutcome::Feasible(_))
    }

    pub fn choice(&self) -> Option<&PlanChoice> {
        match self {
            BudgetOutcome::Feasible(c) => Some(c),
            BudgetOutcome::Infeasible(Infeasible::DetectionBelowMinimum { best, .. }) => Some(best),
            BudgetOutcome::Infeasible(_) => None,
        }
    }
}

/// Two-vertex mix, listed in the caller's practice order.
fn two_way_plan(practices: &[Practice], slow: &str, fast: &str, f_slow: f64) -> Result<MixPlan> {
    let mut weights = Vec::with_capacity(2);
    for p in practices {
        if p.id == slow {
            weights.push((p.id.clone(), f_slow));
        } else if p.id == fast {
            weights.push((p.id.clone(), 1.0 - f_slow));
        }
    }
    MixPlan::new(weights)
}

/// The detection-maximizing plan whose mean time stays within the budget.
pub fn plan_for_budget(practices: &[Practice], q: &BudgetQuery) -> Result<BudgetOutcome> {
    let frontier = efficient_frontier(practices)?;
    let budget = q.max_mean_time_s;
    let fastest = &frontier[0];
    if budget < fastest.mean_time_s - TIME_EPS {
        return Ok(BudgetOutcome::Infeasible(Infeasible::BudgetBelowFastest {
            budget_s: budget,
            fastest_s: fastest.mean_time_s,
            gap_s: fastest.mean_time_s - budget,
        }));
    }

    // Last vertex that fits the budget.
    let j = frontier.iter().rposition(|v| v.mean_time_s <= budget + TIME_EPS).unwrap_or(0);
    let lo = &frontier[j];
    let choice = match frontier.get(j + 1) {
        Some(hi) if (budget - lo.mean_time_s).abs() > TIME_EPS => {
            let f = (budget - lo.mean_time_s) / (hi.mean_time_s - lo.mean_time_s);
            let slow = &hi.plan.weights()[0].practice;
            let fast = &lo.plan.weights()[0].practice;
            PlanChoice {
                plan: two_way_plan(practices, slow, fast, f)?,
                mean_time_s: f * hi.mean_time_s + (1.0 - f) * lo.mean_time_s,
                detection: f * hi.detection + (1.0 - f) * lo.detection,
            }
        }
        _ => PlanChoice { plan: lo.plan.clone(), mean_time_s: lo.mean_time_s, detection: lo.detection },
    };

    if let Some(required) = q.min_detection {
        if choice.detection < required {
            let gap = required - choice.detection;
            return Ok(BudgetOutcome::Infeasible(Infeasible::DetectionBelowMinimum { best: choice, required, gap }));
        }
    }
    Ok(BudgetOutcome::Feasible(choice))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub label: String,
    pub x_seconds: f64,
    pub y_detection: f64,
}

/// One row of the plotting table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartRow {
    pub series: String,
    pub x_seconds: f64,
    pub y_detection: f64,
}

/// Everything needed to draw the delay/detection chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartData {
    pub practices: Vec<ChartPoint>,
    pub plan: ChartPoint,
    pub frontier: Vec<(f64, f64)>,
    /// Vertical max-delay line.
    pub max_delay_s: Option<f64>,
    /// Horizontal minimal-detection line.
    pub min_detection: Option<f64>,
}

pub fn chart_data(practices: &[Practice], plan: &MixPlan, q: Option<&BudgetQuery>) -> Result<ChartData> {
    let frontier = efficient_frontier(practices)?;
    Ok(ChartData {
        practices: practices
            .iter()
            .map(|p| ChartPoint {
                label: p.id.clone(),
                x_seconds: p.mean_time_s(),
                y_detection: effective_detection(p),
            })
            .collect(),
        plan: ChartPoint {
            label: plan.to_string(),
            x_seconds: mix_mean_time(plan, practices)?,
            y_detection: mix_detection(plan, practices)?,
        },
        frontier: frontier.iter().map(|v| (v.mean_time_s, v.detection)).collect(),
        max_delay_s: q.map(|q| q.max_mean_time_s),
        min_detection: q.and_then(|q| q.min_detection),
    })
}

impl ChartData {
    /// Horizontal extent covering every point and the delay line.
    pub fn x_range(&self) -> (f64, f64) {
        let xs = self
            .practices
            .iter()
            .map(|p| p.x_seconds)
            .chain(std::iter::once(self.plan.x_seconds))
            .chain(self.max_delay_s);
        xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    }

    /// Flat `(series, x_seconds, y_detection)` rows.
    pub fn rows(&self) -> Vec<ChartRow> {
        let row = |series: &str, x: f64, y: f64| ChartRow { series: series.to_string(), x_seconds: x, y_detection: y };
        let mut rows = Vec::new();
        for p in &self.practices {
            rows.push(row(&format!("practice:{}", p.label), p.x_seconds, p.y_detection));
        }
        rows.push(row("plan", self.plan.x_seconds, self.plan.y_detection));
        for &(x, y) in &self.frontier {
            rows.push(row("frontier", x, y));
        }
        if let Some(t) = self.max_delay_s {
            rows.push(row("max_delay", t, 0.0));
            rows.push(row("max_delay", t, 1.0));
        }
        if let Some(d) = self.min_detection {
            let (lo, hi) = self.x_range();
            rows.push(row("min_detection", lo, d));
            rows.push(row("min_detection", hi, d));
        }
        rows
    }
}

//! Shared domain types: screening practices, mix plans and service-time models.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a plan's weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Shape of the per-patron no-alarm screening time distribution.
///
/// The mean always comes from the owning [`Practice`]'s `base_service_s`, so a
/// practice and its service model can never disagree on the mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceShape {
    #[default]
    Deterministic,
    Exponential,
    /// Lognormal with the given coefficient of variation.
    Lognormal {
        cv: f64,
    },
}

/// A service-time distribution with an explicit mean in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceTimeModel {
    Deterministic { mean_s: f64 },
    Exponential { mean_s: f64 },
    Lognormal { mean_s: f64, cv: f64 },
}

impl ServiceTimeModel {
    pub fn mean_s(&self) -> f64 {
        match *self {
            ServiceTimeModel::Deterministic { mean_s }
            | ServiceTimeModel::Exponential { mean_s }
            | ServiceTimeModel::Lognormal { mean_s, .. } => mean_s,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mean = self.mean_s();
        if !(mean > 0.0 && mean.is_finite()) {
            problems.push("service time must be positive".to_string());
        }
        if let ServiceTimeModel::Lognormal { cv, .. } = *self {
            if !(cv > 0.0 && cv.is_finite()) {
                problems.push("lognormal coefficient of variation must be positive".to_string());
            }
        }
        problems
    }

    /// Lognormal `(mu, sigma)` of the underlying normal, matching mean and cv.
    pub(crate) fn lognormal_params(mean_s: f64, cv: f64) -> (f64, f64) {
        let sigma2 = (1.0 + cv * cv).ln();
        (mean_s.ln() - 0.5 * sigma2, sigma2.sqrt())
    }
}

/// A complete screening configuration (device setting plus procedure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Practice {
    pub id: String,
    /// Fraction of carried threats flagged by the device at this setting.
    pub detection: f64,
    /// Fraction of clean patrons who alarm.
    #[serde(default)]
    pub false_alarm: f64,
    /// Screening time when no alarm occurs.
    pub base_service_s: f64,
    /// Extra time added on an alarm (pat-down, divestment).
    #[serde(default)]
    pub alarm_extra_s: f64,
    /// Fraction of alarm signals the operator fails to act on.
    #[serde(default)]
    pub operator_miss: f64,
    #[serde(default)]
    pub service: ServiceShape,
}

impl Practice {
    /// A practice with only detection and mean time set, as in a two-column table.
    pub fn new(id: impl Into<String>, detection: f64, base_service_s: f64) -> Self {
        Practice {
            id: id.into(),
            detection,
            false_alarm: 0.0,
            base_service_s,
            alarm_extra_s: 0.0,
            operator_miss: 0.0,
            service: ServiceShape::Deterministic,
        }
    }

    pub fn with_operator_miss(mut self, operator_miss: f64) -> Self {
        self.operator_miss = operator_miss;
        self
    }

    pub fn with_false_alarm(mut self, false_alarm: f64, alarm_extra_s: f64) -> Self {
        self.false_alarm = false_alarm;
        self.alarm_extra_s = alarm_extra_s;
        self
    }

    pub fn with_service(mut self, service: ServiceShape) -> Self {
        self.service = service;
        self
    }

    /// Expected screening time per patron, including the false-alarm term.
    pub fn mean_time_s(&self) -> f64 {
        self.base_service_s + self.false_alarm * self.alarm_extra_s
    }

    pub fn service_model(&self) -> ServiceTimeModel {
        let mean_s = self.base_service_s;
        match self.service {
            ServiceShape::Deterministic => ServiceTimeModel::Deterministic { mean_s },
            ServiceShape::Exponential => ServiceTimeModel::Exponential { mean_s },
            ServiceShape::Lognormal { cv } => ServiceTimeModel::Lognormal { mean_s, cv },
        }
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Every violated invariant of `p`, in field order. Empty means valid.
pub fn validate_practice(p: &Practice) -> Vec<String> {
    let mut problems = Vec::new();
    if p.id.trim().is_empty() {
        problems.push("practice id must not be empty".to_string());
    }
    if !in_unit(p.detection) {
        problems.push("detection out of [0,1]".to_string());
    }
    if !in_unit(p.false_alarm) {
        problems.push("false_alarm out of [0,1]".to_string());
    }
    if !in_unit(p.operator_miss) {
        problems.push("operator_miss out of [0,1]".to_string());
    }
    if !(p.alarm_extra_s >= 0.0 && p.alarm_extra_s.is_finite()) {
        problems.push("alarm extra time must be non-negative".to_string());
    }
    // service_model() reports the non-positive base time.
    problems.extend(p.service_model().validate());
    problems
}

/// Detection after the operator's field miss rate: `detection * (1 - operator_miss)`.
pub fn effective_detection(p: &Practice) -> f64 {
    p.detection * (1.0 - p.operator_miss)
}

/// Checks every practice and that ids are distinct.
pub fn validate_practices(practices: &[Practice]) -> Result<()> {
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for p in practices {
        for msg in validate_practice(p) {
            problems.push(format!("practice {:?}: {}", p.id, msg));
        }
        if !seen.insert(p.id.as_str()) {
            problems.push(format!("duplicate practice id {:?}", p.id));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems))
    }
}

/// Looks up a practice by id.
pub fn find_practice<'a>(practices: &'a [Practice], id: &str) -> Result<&'a Practice> {
    practices.iter().find(|p| p.id == id).ok_or_else(|| Error::UnresolvedPractice(id.to_string()))
}

/// One entry of a [`MixPlan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanWeight {
    pub practice: String,
    pub weight: f64,
}

/// A probability distribution over practices; each patron is assigned one at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PlanWeight>", into = "Vec<PlanWeight>")]
pub struct MixPlan {
    weights: Vec<PlanWeight>,
}

impl MixPlan {
    pub fn new<I, S>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let weights = weights.into_iter().map(|(id, w)| PlanWeight { practice: id.into(), weight: w }).collect();
        Self::from_weights(weights)
    }

    pub fn from_weights(weights: Vec<PlanWeight>) -> Result<Self> {
        let mut problems = Vec::new();
        if weights.is_empty() {
            problems.push("plan has no weights".to_string());
        }
        let mut seen = HashSet::new();
        let mut sum = 0.0;
        for w in &weights {
            if !in_unit(w.weight) {
                problems.push(format!("weight for {:?} out of [0,1]", w.practice));
            }
            if !seen.insert(w.practice.as_str()) {
                problems.push(format!("practice {:?} appears twice in plan", w.practice));
            }
            sum += w.weight;
        }
        if !weights.is_empty() && (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            problems.push(format!("plan weights sum to {sum}, not 1"));
        }
        if problems.is_empty() {
            Ok(MixPlan { weights })
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// All weight on one practice.
    pub fn pure(id: impl Into<String>) -> Self {
        MixPlan { weights: vec![PlanWeight { practice: id.into(), weight: 1.0 }] }
    }

    pub fn weights(&self) -> &[PlanWeight] {
        &self.weights
    }

    /// Weight on `id`, zero if absent.
    pub fn weight_of(&self, id: &str) -> f64 {
        self.weights.iter().find(|w| w.practice == id).map_or(0.0, |w| w.weight)
    }

    /// Checks that every referenced id resolves against `practices`.
    pub fn resolve<'a>(&self, practices: &'a [Practice]) -> Result<Vec<(&'a Practice, f64)>> {
        self.weights.iter().map(|w| find_practice(practices, &w.practice).map(|p| (p, w.weight))).collect()
    }

    /// `lambda * self + (1 - lambda) * other`, over the union of practices.
    pub fn blend(&self, other: &MixPlan, lambda: f64) -> Result<MixPlan> {
        let mut ids: Vec<&str> = self.weights.iter().map(|w| w.practice.as_str()).collect();
        for w in &other.weights {
            if !ids.contains(&w.practice.as_str()) {
                ids.push(&w.practice);
            }
        }
        let weights = ids
            .into_iter()
            .map(|id| {
                let w = lambda * self.weight_of(id) + (1.0 - lambda) * other.weight_of(id);
                (id.to_string(), w.clamp(0.0, 1.0))
            })
            .collect::<Vec<_>>();
        MixPlan::new(weights)
    }
}

impl TryFrom<Vec<PlanWeight>> for MixPlan {
    type Error = Error;

    fn try_from(weights: Vec<PlanWeight>) -> Result<Self> {
        MixPlan::from_weights(weights)
    }
}

impl From<MixPlan> for Vec<PlanWeight> {
    fn from(plan: MixPlan) -> Self {
        plan.weights
    }
}

impl fmt::Display for MixPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.weights.iter().map(|w| format!("{}={:.4}", w.practice, w.weight)).collect();
        f.write_str(&parts.join(" "))
    }
}

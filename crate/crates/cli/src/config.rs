//! The TOML configuration file.
//!
//! ```toml
//! schema_version = 1
//! seed = 42                    # optional
//! baseline = "B"               # optional, for miss reduction
//!
//! [[practices]]
//! id = "A"
//! detection = 0.95
//! base_service_s = 10.0
//! false_alarm = 0.0            # optional
//! alarm_extra_s = 0.0          # optional
//! operator_miss = 0.0          # optional
//! service = { kind = "deterministic" }   # or "exponential", or { kind = "lognormal", cv = 0.4 }
//!
//! [[plan]]                     # optional; otherwise derived from [budget]
//! practice = "A"
//! weight = 0.5
//!
//! [budget]
//! max_mean_time_s = 8.0
//! min_detection = 0.8          # optional
//!
//! [simulation]
//! routing = "random_split"     # or "lane_banks", "self_selection"
//! prevalence = 25.0
//! lanes = [{ id = "L1", practice = "A" }, { id = "L2", practice = "B" }]
//!
//! [simulation.arrivals]
//! patrons = 10000
//! window_s = 80000.0
//! process = "uniform"          # or "poisson"
//! ```
//!
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use screenmix_core::mixer::{plan_for_budget, BudgetOutcome, BudgetQuery};
use screenmix_core::model::{validate_practice, validate_practices, MixPlan, Practice};
use screenmix_core::simulator::{Arrivals, Lane, Routing, SimConfig};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A practice that passed validation while being parsed, so the parser can
/// point at the offending table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Practice", into = "Practice")]
pub struct CheckedPractice(pub Practice);

impl TryFrom<Practice> for CheckedPractice {
    type Error = String;

    fn try_from(p: Practice) -> Result<Self, String> {
        let problems = validate_practice(&p);
        if problems.is_empty() {
            Ok(CheckedPractice(p))
        } else {
            Err(format!("practice {:?}: {}", p.id, problems.join("; ")))
        }
    }
}

impl From<CheckedPractice> for Practice {
    fn from(p: CheckedPractice) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub max_mean_time_s: f64,
    pub min_detection: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub routing: Routing,
    pub prevalence: f64,
    pub lanes: Vec<Lane>,
    pub arrivals: Arrivals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub baseline: Option<String>,
    pub practices: Vec<CheckedPractice>,
    pub plan: Option<MixPlan>,
    pub budget: Option<BudgetSection>,
    pub simulation: Option<SimulationSection>,
}

/// A parsed configuration together with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: String,
    pub source: String,
    pub config: Config,
}

/// 1-based line of the first occurrence of `needle`, if any.
fn line_of(source: &str, needle: &str) -> Option<usize> {
    source.lines().position(|l| l.contains(needle)).map(|i| i + 1)
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&path.display().to_string(), source)
    }

    pub fn parse(path: &str, source: String) -> Result<Self, CliError> {
        let config: Config =
            toml::from_str(&source).map_err(|e| CliError::Input(format!("{path}: {}", e.to_string().trim_end())))?;
        let loaded = LoadedConfig { path: path.to_string(), source, config };
        loaded.check()?;
        Ok(loaded)
    }

    fn error_near(&self, needle: &str, msg: impl std::fmt::Display) -> CliError {
        match line_of(&self.source, needle) {
            Some(line) => CliError::Input(format!("{}:{line}: {msg}", self.path)),
            None => CliError::Input(format!("{}: {msg}", self.path)),
        }
    }

    /// Cross-reference checks the parser cannot do on its own.
    fn check(&self) -> Result<(), CliError> {
        let c = &self.config;
        if c.schema_version != SCHEMA_VERSION {
            return Err(self.error_near(
                "schema_version",
                format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", c.schema_version),
            ));
        }
        if c.practices.is_empty() {
            return Err(self.error_near("", "at least one [[practices]] entry is required"));
        }
        let practices = self.practices();
        if let Err(e) = validate_practices(&practices) {
            return Err(self.error_near("[[practices]]", e));
        }
        let known = |id: &str| practices.iter().any(|p| p.id == id);
        if let Some(plan) = &c.plan {
            for w in plan.weights() {
                if !known(&w.practice) {
                    return Err(self.error_near(
                        &format!("\"{}\"", w.practice),
                        format!("plan refers to unknown practice {:?}", w.practice),
                    ));
                }
            }
        }
        if let Some(b) = &c.baseline {
            if !known(b) {
                return Err(self.error_near("baseline", format!("baseline refers to unknown practice {b:?}")));
            }
        }
        if let Some(budget) = &c.budget {
            budget_query(budget.max_mean_time_s, budget.min_detection)
                .map_err(|e| self.error_near("max_mean_time_s", e))?;
        }
        if let Some(sim) = &c.simulation {
            for lane in &sim.lanes {
                if !known(&lane.practice) {
                    return Err(self.error_near(
                        &format!("\"{}\"", lane.id),
                        format!("lane {:?} uses unknown practice {:?}", lane.id, lane.practice),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn practices(&self) -> Vec<Practice> {
        self.config.practices.iter().map(|p| p.0.clone()).collect()
    }

    /// The baseline for miss reduction: configured, or else the fastest practice.
    pub fn baseline(&self, flag: Option<&str>) -> Result<Practice, CliError> {
        let practices = self.practices();
        let id = flag.map(str::to_string).or_else(|| self.config.baseline.clone());
        match id {
            Some(id) => practices
                .into_iter()
                .find(|p| p.id == id)
                .ok_or_else(|| CliError::Input(format!("baseline {id:?} is not a configured practice"))),
            None => practices
                .into_iter()
                .min_by(|a, b| a.mean_time_s().total_cmp(&b.mean_time_s()).then_with(|| a.id.cmp(&b.id)))
                .ok_or_else(|| CliError::Input("no practices configured".into())),
        }
    }

    /// Budget from the flag, falling back to the config file.
    pub fn budget(&self, max_flag: Option<f64>, min_flag: Option<f64>) -> Result<Option<BudgetQuery>, CliError> {
        let section = self.config.budget;
        let max = max_flag.or(section.map(|b| b.max_mean_time_s));
        let min = min_flag.or(section.and_then(|b| b.min_detection));
        max.map(|m| budget_query(m, min)).transpose()
    }

    /// The plan to simulate: explicit plan, else the budget-optimal one.
    pub fn plan(&self, budget: Option<&BudgetQuery>) -> Result<MixPlan, CliError> {
        if let Some(plan) = &self.config.plan {
            return Ok(plan.clone());
        }
        let Some(q) = budget else {
            return Err(CliError::Input(format!("{}: needs a [[plan]] or a [budget] to derive one", self.path)));
        };
        match plan_for_budget(&self.practices(), q).map_err(|e| CliError::Input(e.to_string()))? {
            BudgetOutcome::Feasible(choice) => Ok(choice.plan),
            BudgetOutcome::Infeasible(why) => {
                Err(CliError::Input(format!("no plan configured and the budget is infeasible: {why:?}")))
            }
        }
    }

    pub fn sim_config(&self, seed: u64, budget: Option<&BudgetQuery>) -> Result<SimConfig, CliError> {
        let Some(sim) = &self.config.simulation else {
            return Err(self.error_near("", "a [simulation] section is required"));
        };
        let cfg = SimConfig {
            practices: self.practices(),
            plan: self.plan(budget)?,
            lanes: sim.lanes.clone(),
            routing: sim.routing,
            arrivals: sim.arrivals,
            prevalence: sim.prevalence,
            budget_s: budget.map(|q| q.max_mean_time_s),
            master_seed: seed,
        };
        cfg.validate().map_err(|e| self.error_near("[simulation]", e))?;
        Ok(cfg)
    }
}

pub fn budget_query(max: f64, min: Option<f64>) -> Result<BudgetQuery, CliError> {
    let q = BudgetQuery::new(max).map_err(|e| CliError::Input(e.to_string()))?;
    match min {
        Some(m) => q.with_min_detection(m).map_err(|e| CliError::Input(e.to_string())),
        None => Ok(q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_PRACTICE: &str = r#"
schema_version = 1
baseline = "B"

[[practices]]
id = "A"
detection = 0.95
base_service_s = 10.0

[[practices]]
id = "B"
detection = 0.75
base_service_s = 6.0
"#;

    #[test]
    fn parses_minimal() {
        let c = LoadedConfig::parse("t.toml", TWO_PRACTICE.to_string()).unwrap();
        assert_eq!(c.practices().len(), 2);
        assert_eq!(c.baseline(None).unwrap().id, "B");
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let src = TWO_PRACTICE.replace("base_service_s = 6.0", "base_service_s = 6.0\ncolour = 3");
        let err = LoadedConfig::parse("t.toml", src).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn invalid_practice_anchored() {
        let src = TWO_PRACTICE.replace("detection = 0.95", "detection = 1.3");
        let err = LoadedConfig::parse("t.toml", src).unwrap_err().to_string();
        assert!(err.contains("detection out of [0,1]"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn unknown_plan_practice_anchored() {
        let src = format!("{TWO_PRACTICE}\n[[plan]]\npractice = \"Q\"\nweight = 1.0\n");
        let err = LoadedConfig::parse("t.toml", src).unwrap_err().to_string();
        assert!(err.starts_with("t.toml:"), "{err}");
        assert!(err.contains("unknown practice \"Q\""), "{err}");
    }

    #[test]
    fn wrong_schema_version() {
        let src = TWO_PRACTICE.replace("schema_version = 1", "schema_version = 7");
        assert!(LoadedConfig::parse("t.toml", src).is_err());
    }

    #[test]
    fn default_baseline_is_fastest() {
        let src = TWO_PRACTICE.replace("baseline = \"B\"\n", "");
        let c = LoadedConfig::parse("t.toml", src).unwrap();
        assert_eq!(c.baseline(None).unwrap().id, "B");
    }
}

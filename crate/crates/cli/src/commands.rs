//! Subcommand implementations. Each returns a serializable result plus an exit code.

use serde::{Deserialize, Serialize};

use screenmix_core::estimators::{
    compex_estimate, compex_expected_finds, coverage_oracle, redteam_rate, rotation_unchecked_fraction,
    unchecked_fraction, CompexEstimate, CoverageOracle,
};
use screenmix_core::mixer::{
    chart_data, efficient_frontier, miss_reduction, mix_detection, mix_mean_time, BudgetOutcome, BudgetQuery,
    ChartData, ChartRow, FrontierPoint, Infeasible,
};
use screenmix_core::model::{effective_detection, MixPlan};
use screenmix_core::rng::{Purpose, RngContract};
use screenmix_core::schemes::{
    counting_team_attack, frequency_audit, playbook_frequencies, predictability, run_scheme,
    simulated_guesser_accuracy, AuditReport, Predictability, SelectionScheme,
};
use screenmix_core::simulator::{run_monte_carlo, MonteCarloReport, Routing};
use screenmix_core::stats::{clopper_pearson, EstimateWithInterval};

use crate::config::LoadedConfig;
use crate::report::{opt_prob, prob, secs, table, Render};
use crate::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_FLAGGED: i32 = 2;

fn core_err(e: screenmix_core::Error) -> CliError {
    CliError::Input(e.to_string())
}

fn chart_csv_rows(rows: &[ChartRow]) -> Vec<Vec<String>> {
    rows.iter().map(|r| vec![r.series.clone(), r.x_seconds.to_string(), r.y_detection.to_string()]).collect()
}

fn chart_table(rows: &[ChartRow]) -> String {
    let cells: Vec<Vec<String>> =
        rows.iter().map(|r| vec![r.series.clone(), secs(r.x_seconds), prob(r.y_detection)]).collect();
    table(&["series", "x_seconds", "y_detection"], &cells)
}

const CHART_HEADER: [&str; 3] = ["series", "x_seconds", "y_detection"];

// ---------------------------------------------------------------- plan

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub budget: BudgetQuery,
    pub outcome: BudgetOutcome,
    pub baseline: String,
    pub miss_reduction: Option<f64>,
    pub chart: Option<ChartData>,
}

pub fn plan(
    cfg: &LoadedConfig,
    budget: Option<BudgetQuery>,
    baseline: Option<&str>,
) -> Result<(PlanResult, i32), CliError> {
    let practices = cfg.practices();
    let q = budget.ok_or_else(|| CliError::Input("plan needs --budget or a [budget] section".into()))?;
    let baseline = cfg.baseline(baseline)?;
    let outcome = screenmix_core::mixer::plan_for_budget(&practices, &q).map_err(core_err)?;
    let (miss_reduction, chart) = match outcome.choice() {
        Some(c) => {
            let reduction = if effective_detection(&baseline) < 1.0 {
                Some(miss_reduction(&baseline, &c.plan, &practices).map_err(core_err)?)
            } else {
                None
            };
            (reduction, Some(chart_data(&practices, &c.plan, Some(&q)).map_err(core_err)?))
        }
        None => (None, None),
    };
    let exit = if outcome.is_feasible() { EXIT_OK } else { EXIT_FLAGGED };
    Ok((PlanResult { budget: q, outcome, baseline: baseline.id, miss_reduction, chart }, exit))
}

fn budget_text(q: &BudgetQuery) -> String {
    match q.min_detection {
        Some(m) => format!("budget {} s, minimum detection {}", secs(q.max_mean_time_s), prob(m)),
        None => format!("budget {} s", secs(q.max_mean_time_s)),
    }
}

impl Render for PlanResult {
    fn table(&self) -> String {
        let mut out = format!("{}\n", budget_text(&self.budget));
        let reduction = self
            .miss_reduction
            .map(|r| format!(", misses reduced {:.2}% vs {}", 100.0 * r, self.baseline))
            .unwrap_or_default();
        match &self.outcome {
            BudgetOutcome::Feasible(c) => {
                out.push_str(&format!(
                    "mix {}, detection {}, time {} s{reduction}\n",
                    c.plan,
                    prob(c.detection),
                    secs(c.mean_time_s)
                ));
            }
            BudgetOutcome::Infeasible(Infeasible::BudgetBelowFastest { budget_s, fastest_s, gap_s }) => {
                out.push_str(&format!(
                    "INFEASIBLE: budget {} s is below the fastest practice ({} s); short by {} s\n",
                    secs(*budget_s),
                    secs(*fastest_s),
                    secs(*gap_s)
                ));
            }
            BudgetOutcome::Infeasible(Infeasible::DetectionBelowMinimum { best, required, gap }) => {
                out.push_str(&format!(
                    "INFEASIBLE: best mix {} reaches detection {} at {} s, below the required {} (gap {}){reduction}\n",
                    best.plan,
                    prob(best.detection),
                    secs(best.mean_time_s),
                    prob(*required),
                    prob(*gap)
                ));
            }
        }
        if let Some(chart) = &self.chart {
            out.push('\n');
            out.push_str(&chart_table(&chart.rows()));
        }
        out
    }

    fn csv_header(&self) -> Vec<String> {
        CHART_HEADER.iter().map(|s| s.to_string()).collect()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.chart.as_ref().map(|c| chart_csv_rows(&c.rows())).unwrap_or_default()
    }
}

// ---------------------------------------------------------------- frontier

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierResult {
    pub vertices: Vec<FrontierPoint>,
    pub dominated: Vec<String>,
    pub rows: Vec<ChartRow>,
}

pub fn frontier(cfg: &LoadedConfig) -> Result<(FrontierResult, i32), CliError> {
    let practices = cfg.practices();
    let vertices = efficient_frontier(&practices).map_err(core_err)?;
    let on_frontier = |id: &str| vertices.iter().any(|v| v.plan.weight_of(id) > 0.0);
    let dominated = practices.iter().filter(|p| !on_frontier(&p.id)).map(|p| p.id.clone()).collect();
    let mut rows: Vec<ChartRow> = practices
        .iter()
        .map(|p| ChartRow {
            series: format!("practice:{}", p.id),
            x_seconds: p.mean_time_s(),
            y_detection: effective_detection(p),
        })
        .collect();
    rows.extend(vertices.iter().map(|v| ChartRow {
        series: "frontier".into(),
        x_seconds: v.mean_time_s,
        y_detection: v.detection,
    }));
    Ok((FrontierResult { vertices, dominated, rows }, EXIT_OK))
}

impl Render for FrontierResult {
    fn table(&self) -> String {
        let cells: Vec<Vec<String>> =
            self.vertices.iter().map(|v| vec![v.plan.to_string(), secs(v.mean_time_s), prob(v.detection)]).collect();
        let mut out = table(&["vertex", "mean_time_s", "detection"], &cells);
        if !self.dominated.is_empty() {
            out.push_str(&format!("dominated: {}\n", self.dominated.join(", ")));
        }
        out
    }

    fn csv_header(&self) -> Vec<String> {
        CHART_HEADER.iter().map(|s| s.to_string()).collect()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        chart_csv_rows(&self.rows)
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub routing: Routing,
    pub plan: MixPlan,
    pub analytic_detection: f64,
    pub analytic_mean_time_s: f64,
    pub monte_carlo: MonteCarloReport,
}

pub fn simulate(
    cfg: &LoadedConfig,
    seed: u64,
    replications: u64,
    budget: Option<BudgetQuery>,
) -> Result<(SimulateResult, i32), CliError> {
    let sim = cfg.sim_config(seed, budget.as_ref())?;
    let analytic_detection = mix_detection(&sim.plan, &sim.practices).map_err(core_err)?;
    let analytic_mean_time_s = mix_mean_time(&sim.plan, &sim.practices).map_err(core_err)?;
    let monte_carlo = run_monte_carlo(&sim, replications).map_err(core_err)?;
    let exit = if monte_carlo.mix_flagged() { EXIT_FLAGGED } else { EXIT_OK };
    Ok((
        SimulateResult { routing: sim.routing, plan: sim.plan, analytic_detection, analytic_mean_time_s, monte_carlo },
        exit,
    ))
}

impl Render for SimulateResult {
    fn table(&self) -> String {
        let mc = &self.monte_carlo;
        let mut out =
            format!("routing {}, plan {}, {} replications\n", self.routing.label(), self.plan, mc.replications);
        out.push_str(&format!(
            "analytic: detection {}, mean time {} s\n",
            prob(self.analytic_detection),
            secs(self.analytic_mean_time_s)
        ));
        out.push_str(&format!("simulated pooled detection: {}\n", opt_prob(mc.pooled_detection_rate)));
        if let (Some(b), Some(p)) = (mc.budget_s, mc.p_within_budget) {
            out.push_str(&format!("P(mean screening time <= {} s): {}\n", secs(b), prob(p)));
        }
        out.push('\n');
        let cells: Vec<Vec<String>> = mc
            .metrics
            .iter()
            .map(|m| {
                let s = &m.summary;
                let f = if m.metric.starts_with("fraction:") || m.metric == "detection_rate" { prob } else { secs };
                vec![m.metric.clone(), f(s.mean), f(s.sd), f(s.p2_5), f(s.p50), f(s.p97_5)]
            })
            .collect();
        out.push_str(&table(&["metric", "mean", "sd", "p2.5", "p50", "p97.5"], &cells));
        out.push('\n');
        let cells: Vec<Vec<String>> = mc
            .mix_deviation
            .iter()
            .map(|d| {
                vec![
                    d.practice.clone(),
                    prob(d.nominal),
                    prob(d.realized_mean),
                    prob(d.std_error),
                    if d.flagged { "FLAG".into() } else { "ok".into() },
                ]
            })
            .collect();
        out.push_str(&table(&["practice", "nominal", "realized", "std_error", "mix"], &cells));
        if mc.mix_flagged() {
            out.push_str("WARNING: realized mix deviates from the nominal plan\n");
        }
        out
    }

    fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "replication",
            "patrons",
            "mean_service_s",
            "mean_time_in_system_s",
            "p95_time_in_system_s",
            "carriers",
            "detected",
            "missed",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        if let Some(r) = self.monte_carlo.results.first() {
            h.extend(r.realized_mix.iter().map(|s| format!("fraction:{}", s.practice)));
            h.extend(r.max_queue.iter().map(|q| format!("max_queue:{}", q.lane)));
        }
        h
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.monte_carlo
            .results
            .iter()
            .map(|r| {
                let mut row = vec![
                    r.replication.to_string(),
                    r.patrons.to_string(),
                    r.mean_service_s.to_string(),
                    r.mean_time_in_system_s.to_string(),
                    r.p95_time_in_system_s.to_string(),
                    r.carriers.to_string(),
                    r.detected.to_string(),
                    r.missed.to_string(),
                ];
                row.extend(r.realized_mix.iter().map(|s| s.fraction.to_string()));
                row.extend(r.max_queue.iter().map(|q| q.max_waiting.to_string()));
                row
            })
            .collect()
    }
}

// ---------------------------------------------------------------- coverage

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub p: f64,
    pub years: u32,
    pub employees: usize,
    pub unchecked_fraction: f64,
    pub unchecked_count: f64,
    pub rotation_fraction: f64,
    pub rotation_count: f64,
    pub oracle: CoverageOracle,
}

pub fn coverage(
    seed: u64,
    p: f64,
    years: u32,
    employees: usize,
    trials: usize,
) -> Result<(CoverageResult, i32), CliError> {
    let unchecked = unchecked_fraction(p, years).map_err(core_err)?;
    let rotation = rotation_unchecked_fraction(p, years).map_err(core_err)?;
    let mut stream = RngContract::new(seed).stream(0, Purpose::Coverage);
    let oracle = coverage_oracle(employees, p, years, trials, &mut stream).map_err(core_err)?;
    Ok((
        CoverageResult {
            p,
            years,
            employees,
            unchecked_fraction: unchecked,
            unchecked_count: unchecked * employees as f64,
            rotation_fraction: rotation,
            rotation_count: rotation * employees as f64,
            oracle,
        },
        EXIT_OK,
    ))
}

impl Render for CoverageResult {
    fn table(&self) -> String {
        format!(
            "recheck probability {} per year, {} years, {} employees\n\
             unchecked ≈ {:.1} ({:.2}%); rotation: {:.1} ({:.2}%)\n\
             random rechecks leave {} more unchecked than rotation\n\
             simulated ({} trials): {} ± {} (standard error)\n",
            prob(self.p),
            self.years,
            self.employees,
            self.unchecked_count,
            100.0 * self.unchecked_fraction,
            self.rotation_count,
            100.0 * self.rotation_fraction,
            prob(self.unchecked_fraction - self.rotation_fraction),
            self.oracle.trials,
            prob(self.oracle.mean_unchecked),
            prob(self.oracle.std_error),
        )
    }

    fn csv_header(&self) -> Vec<String> {
        vec!["quantity".into(), "value".into()]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        [
            ("unchecked_fraction", self.unchecked_fraction),
            ("unchecked_count", self.unchecked_count),
            ("rotation_fraction", self.rotation_fraction),
            ("rotation_count", self.rotation_count),
            ("oracle_mean_unchecked", self.oracle.mean_unchecked),
            ("oracle_std_error", self.oracle.std_error),
        ]
        .iter()
        .map(|(k, v)| vec![k.to_string(), v.to_string()])
        .collect()
    }
}

// ---------------------------------------------------------------- compex

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedFinds {
    pub carried: f64,
    pub primary_detection: f64,
    pub expected_finds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompexResult {
    pub found: i64,
    pub resample_fraction: f64,
    pub secondary_detection: f64,
    pub estimate: CompexEstimate,
    pub expected: Option<ExpectedFinds>,
}

pub struct CompexInput {
    pub found: i64,
    pub resample_fraction: f64,
    pub secondary_detection: f64,
    pub level: f64,
    pub carried: Option<f64>,
    pub primary_detection: Option<f64>,
}

pub fn compex(input: &CompexInput) -> Result<(CompexResult, i32), CliError> {
    let estimate = compex_estimate(input.found, input.resample_fraction, input.secondary_detection, input.level)
        .map_err(core_err)?;
    let expected = match (input.carried, input.primary_detection) {
        (Some(carried), Some(d)) => Some(ExpectedFinds {
            carried,
            primary_detection: d,
            expected_finds: compex_expected_finds(carried, d, input.resample_fraction, input.secondary_detection)
                .map_err(core_err)?,
        }),
        (None, None) => None,
        _ => return Err(CliError::Input("--carried and --detection must be given together".into())),
    };
    Ok((
        CompexResult {
            found: input.found,
            resample_fraction: input.resample_fraction,
            secondary_detection: input.secondary_detection,
            estimate,
            expected,
        },
        EXIT_OK,
    ))
}

fn interval_text(e: &EstimateWithInterval, fmt: fn(f64) -> String) -> String {
    format!("{} [{}, {}] ({}, {:.0}%)", fmt(e.point), fmt(e.lower), fmt(e.upper), e.method.label(), 100.0 * e.level)
}

impl Render for CompexResult {
    fn table(&self) -> String {
        let mut out = String::new();
        if let Some(x) = &self.expected {
            out.push_str(&format!(
                "expected finds: {} carried × {} missed × {} resampled × {} second-screen = {} per event\n",
                secs(x.carried),
                prob(1.0 - x.primary_detection),
                prob(self.resample_fraction),
                prob(self.secondary_detection),
                prob(x.expected_finds)
            ));
        }
        out.push_str(&format!(
            "found {} in resample (fraction {}, second-screen detection {})\n",
            self.found,
            prob(self.resample_fraction),
            prob(self.secondary_detection)
        ));
        out.push_str(&format!("missed total: {}\n", interval_text(&self.estimate.missed_total, secs)));
        out.push_str(&format!("{}\n", self.estimate.note));
        out
    }

    fn csv_header(&self) -> Vec<String> {
        vec!["quantity".into(), "value".into()]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let e = &self.estimate.missed_total;
        let mut rows = vec![
            vec!["missed_point".into(), e.point.to_string()],
            vec!["missed_lower".into(), e.lower.to_string()],
            vec!["missed_upper".into(), e.upper.to_string()],
            vec!["level".into(), e.level.to_string()],
        ];
        if let Some(x) = &self.expected {
            rows.push(vec!["expected_finds".into(), x.expected_finds.to_string()]);
        }
        rows
    }
}

// ---------------------------------------------------------------- redteam

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedteamResult {
    pub detected: u64,
    pub trials: u64,
    pub wilson: EstimateWithInterval,
    pub exact: EstimateWithInterval,
}

pub fn redteam(detected: u64, trials: u64, level: f64) -> Result<(RedteamResult, i32), CliError> {
    let wilson = redteam_rate(detected, trials, level).map_err(core_err)?;
    let exact = clopper_pearson(detected, trials, level).map_err(core_err)?;
    Ok((RedteamResult { detected, trials, wilson, exact }, EXIT_OK))
}

impl Render for RedteamResult {
    fn table(&self) -> String {
        format!(
            "{} of {} covert tests detected\ndetection rate: {}\nexact cross-check: {}\n",
            self.detected,
            self.trials,
            interval_text(&self.wilson, prob),
            interval_text(&self.exact, prob)
        )
    }

    fn csv_header(&self) -> Vec<String> {
        vec!["method".into(), "point".into(), "lower".into(), "upper".into(), "level".into()]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        [&self.wilson, &self.exact]
            .iter()
            .map(|e| {
                vec![
                    e.method.label().to_string(),
                    e.point.to_string(),
                    e.lower.to_string(),
                    e.upper.to_string(),
                    e.level.to_string(),
                ]
            })
            .collect()
    }
}

// ---------------------------------------------------------------- scheme-audit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeAuditResult {
    pub scheme: SelectionScheme,
    pub count: usize,
    pub audit: AuditReport,
    pub predictability: Predictability,
    pub guesser_accuracy: f64,
    pub attack_trials: usize,
    pub attack_carrier_selected: f64,
    pub playbook_frequencies: Option<Vec<f64>>,
}

pub fn scheme_audit(
    seed: u64,
    scheme: SelectionScheme,
    count: usize,
    trials: usize,
) -> Result<(SchemeAuditResult, i32), CliError> {
    scheme.validate().map_err(core_err)?;
    if count == 0 || trials == 0 {
        return Err(CliError::Input("--count and --trials must be at least 1".into()));
    }
    let rng = RngContract::new(seed);
    let decisions = run_scheme(&scheme, count, &mut rng.stream(0, Purpose::Scheme));
    let audit = frequency_audit(&decisions, scheme.nominal_rate()).map_err(core_err)?;
    let guesser_accuracy = simulated_guesser_accuracy(&scheme, count, &mut rng.stream(0, Purpose::Guesser));
    let attack_carrier_selected = counting_team_attack(&scheme, trials, &mut rng.stream(0, Purpose::Attack));
    let playbook_frequencies = match scheme {
        SelectionScheme::PlaybookDraw { k } => {
            Some(playbook_frequencies(k, count, &mut rng.stream(0, Purpose::Playbook)).map_err(core_err)?)
        }
        _ => None,
    };
    let exit = if audit.flagged { EXIT_FLAGGED } else { EXIT_OK };
    Ok((
        SchemeAuditResult {
            scheme,
            count,
            audit,
            predictability: predictability(&scheme),
            guesser_accuracy,
            attack_trials: trials,
            attack_carrier_selected,
            playbook_frequencies,
        },
        exit,
    ))
}

impl Render for SchemeAuditResult {
    fn table(&self) -> String {
        let a = &self.audit;
        let z = a.z.map_or_else(|| "undefined".to_string(), |z| format!("{z:.2}"));
        let mut rows = vec![
            vec!["selection rate".to_string(), format!("{} (expected {})", prob(a.rate), prob(a.expected_p))],
            vec!["audit z-score".to_string(), format!("{z}{}", if a.flagged { "  FLAG" } else { "" })],
            vec!["longest unselected run".to_string(), a.longest_unselected_run.to_string()],
            vec!["predictability (event start)".to_string(), prob(self.predictability.at_event_start)],
            vec!["predictability (with history)".to_string(), prob(self.predictability.with_history)],
            vec!["simulated guesser accuracy".to_string(), prob(self.guesser_accuracy)],
            vec![
                "counting team: carrier selected".to_string(),
                format!("{} over {} trials", prob(self.attack_carrier_selected), self.attack_trials),
            ],
        ];
        if let Some(freqs) = &self.playbook_frequencies {
            for (i, f) in freqs.iter().enumerate() {
                rows.push(vec![format!("playbook plan {i} drawn"), prob(*f)]);
            }
        }
        format!("scheme {} over {} patrons\n{}", self.scheme.label(), self.count, table(&["check", "result"], &rows))
    }

    fn csv_header(&self) -> Vec<String> {
        vec!["quantity".into(), "value".into()]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![
            vec!["rate".into(), self.audit.rate.to_string()],
            vec!["expected_p".into(), self.audit.expected_p.to_string()],
            vec!["z".into(), self.audit.z.map_or_else(String::new, |z| z.to_string())],
            vec!["flagged".into(), self.audit.flagged.to_string()],
            vec!["longest_unselected_run".into(), self.audit.longest_unselected_run.to_string()],
            vec!["predictability_event_start".into(), self.predictability.at_event_start.to_string()],
            vec!["predictability_with_history".into(), self.predictability.with_history.to_string()],
            vec!["guesser_accuracy".into(), self.guesser_accuracy.to_string()],
            vec!["attack_carrier_selected".into(), self.attack_carrier_selected.to_string()],
        ];
        if let Some(freqs) = &self.playbook_frequencies {
            rows.extend(freqs.iter().enumerate().map(|(i, f)| vec![format!("playbook_{i}"), f.to_string()]));
        }
        rows
    }
}

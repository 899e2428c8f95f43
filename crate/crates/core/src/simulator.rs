//! Seeded discrete-event simulation of arrival, routing, screening and detection.
//!
//! Each lane is a single FCFS server. Per-patron random quantities (carrier
//! status, routing, service time, alarm and detection draws) come from
//! separate purpose streams and are drawn in arrival order, one uniform per
//! patron per purpose. Two configurations that differ only in their plan
//! weights therefore see the same patrons, which makes paired comparisons
//! meaningful.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet, VecDeque};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{effective_detection, validate_practices, MixPlan, Practice, ServiceTimeModel};
use crate::rng::{Purpose, RngContract, Stream, MAX_REPLICATION};
use crate::stats::Summary;

/// Realized-mix deviations smaller than this are never flagged.
pub const MIX_DEVIATION_MIN: f64 = 0.01;
/// Standard errors needed to flag a realized-mix deviation.
pub const MIX_DEVIATION_Z: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    pub id: String,
    pub practice: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    /// Each patron draws a practice from the plan and joins the shortest
    /// queue overall; the lane applies the drawn practice.
    RandomSplit,
    /// Lanes are dedicated to a practice; each patron draws a practice from
    /// the plan and is directed to the shortest lane of that bank.
    LaneBanks,
    /// Patrons join the lane with the fewest people in it and get that lane's practice.
    SelfSelection,
}

impl Routing {
    pub fn label(&self) -> &'static str {
        match self {
            Routing::RandomSplit => "random_split",
            Routing::LaneBanks => "lane_banks",
            Routing::SelfSelection => "self_selection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalProcess {
    /// Evenly spaced across the window.
    Uniform,
    /// Exponential gaps at rate `patrons / window_s`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arrivals {
    pub patrons: usize,
    pub window_s: f64,
    pub process: ArrivalProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub practices: Vec<Practice>,
    pub plan: MixPlan,
    pub lanes: Vec<Lane>,
    pub routing: Routing,
    pub arrivals: Arrivals,
    /// Expected carriers per event; each patron carries with probability `prevalence / patrons`.
    pub prevalence: f64,
    /// Maximum acceptable mean screening time per patron.
    pub budget_s: Option<f64>,
    pub master_seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(Error::Validation(p)) = validate_practices(&self.practices) {
            problems.extend(p);
        }
        if self.practices.is_empty() {
            problems.push("no practices configured".into());
        }
        if let Err(e) = self.plan.resolve(&self.practices) {
            problems.push(e.to_string());
        }
        if self.lanes.is_empty() {
            problems.push("no lanes configured".into());
        }
        let mut lane_ids = HashSet::new();
        for lane in &self.lanes {
            if !lane_ids.insert(lane.id.as_str()) {
                problems.push(format!("duplicate lane id {:?}", lane.id));
            }
            if !self.practices.iter().any(|p| p.id == lane.practice) {
                problems.push(format!("lane {:?} uses unknown practice {:?}", lane.id, lane.practice));
            }
        }
        if self.routing == Routing::LaneBanks {
            for w in self.plan.weights().iter().filter(|w| w.weight > 0.0) {
                if !self.lanes.iter().any(|l| l.practice == w.practice) {
                    problems.push(format!("no lane serves planned practice {:?}", w.practice));
                }
            }
        }
        if !(self.arrivals.window_s > 0.0 && self.arrivals.window_s.is_finite()) {
            problems.push("arrival window must be positive".into());
        }
        if !(self.prevalence >= 0.0 && self.prevalence <= self.arrivals.patrons as f64) {
            problems.push("prevalence must be between 0 and the number of patrons".into());
        }
        if let Some(b) = self.budget_s {
            if !(b > 0.0 && b.is_finite()) {
                problems.push("budget must be positive".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeShare {
    pub practice: String,
    pub screened: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneQueue {
    pub lane: String,
    pub max_waiting: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub master_seed: u64,
    pub replication: u64,
    pub patrons: u64,
    pub realized_mix: Vec<PracticeShare>,
    pub mean_time_in_system_s: f64,
    pub p95_time_in_system_s: f64,
    pub mean_service_s: f64,
    pub carriers: u64,
    pub detected: u64,
    pub missed: u64,
    pub max_queue: Vec<LaneQueue>,
}

impl SimResult {
    /// `detected / carriers`, or `None` without carriers.
    pub fn detection_rate(&self) -> Option<f64> {
        (self.carriers > 0).then(|| self.detected as f64 / self.carriers as f64)
    }

    pub fn fraction_of(&self, practice: &str) -> f64 {
        self.realized_mix.iter().find(|s| s.practice == practice).map_or(0.0, |s| s.fraction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    // Declared first so a server freed at time t is seen by an arrival at t.
    Departure(usize),
    Arrival(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    kind: EventKind,
    seq: u64,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        let rank = |k: &EventKind| match k {
            EventKind::Departure(_) => 0,
            EventKind::Arrival(_) => 1,
        };
        self.time.total_cmp(&other.time).then(rank(&self.kind).cmp(&rank(&other.kind))).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Default)]
struct LaneState {
    waiting: VecDeque<usize>,
    in_service: Option<usize>,
    max_waiting: u64,
}

impl LaneState {
    fn in_system(&self) -> usize {
        self.waiting.len() + usize::from(self.in_service.is_some())
    }
}

/// Draws a service time from one uniform by inverse transform.
fn service_time(model: &ServiceTimeModel, u: f64, normal: &Normal) -> f64 {
    match *model {
        ServiceTimeModel::Deterministic { mean_s } => mean_s,
        ServiceTimeModel::Exponential { mean_s } => -mean_s * (1.0 - u).ln(),
        ServiceTimeModel::Lognormal { mean_s, cv } => {
            let (mu, sigma) = ServiceTimeModel::lognormal_params(mean_s, cv);
            let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            (mu + sigma * normal.inverse_cdf(u)).exp()
        }
    }
}

fn pick_weighted(cumulative: &[(usize, f64)], u: f64) -> usize {
    cumulative
        .iter()
        .find(|&&(_, c)| u < c)
        .or(cumulative.last())
        .map(|&(i, _)| i)
        .expect("plan has at least one weight")
}

/// Index of the lane with the fewest patrons among `candidates`, lowest index on ties.
fn shortest(lanes: &[LaneState], candidates: &[usize]) -> usize {
    *candidates.iter().min_by_key(|&&i| (lanes[i].in_system(), i)).expect("at least one candidate lane")
}

/// Runs replication `replication` of `c`.
pub fn run_replication(c: &SimConfig, replication: u64) -> Result<SimResult> {
    c.validate()?;
    if replication > MAX_REPLICATION {
        return Err(Error::InvalidArgument(format!("replication index {replication} too large")));
    }
    let rng = RngContract::new(c.master_seed);
    let stream = |p| rng.stream(replication, p);
    let (mut arrival_rng, mut routing_rng, mut carrier_rng): (Stream, Stream, Stream) =
        (stream(Purpose::Arrivals), stream(Purpose::Routing), stream(Purpose::Carriers));
    let (mut detection_rng, mut service_rng, mut alarm_rng, mut tie_rng) =
        (stream(Purpose::Detection), stream(Purpose::Service), stream(Purpose::Alarms), stream(Purpose::TieBreak));

    let n = c.arrivals.patrons;
    let practice_index = |id: &str| c.practices.iter().position(|p| p.id == id).expect("validated id");
    let mut acc = 0.0;
    let cumulative: Vec<(usize, f64)> = c
        .plan
        .weights()
        .iter()
        .map(|w| {
            acc += w.weight;
            (practice_index(&w.practice), acc)
        })
        .collect();
    let lane_practice: Vec<usize> = c.lanes.iter().map(|l| practice_index(&l.practice)).collect();
    let all_lanes: Vec<usize> = (0..c.lanes.len()).collect();
    let banks: Vec<Vec<usize>> = (0..c.practices.len())
        .map(|pi| all_lanes.iter().copied().filter(|&l| lane_practice[l] == pi).collect())
        .collect();
    let models: Vec<ServiceTimeModel> = c.practices.iter().map(Practice::service_model).collect();
    let eff: Vec<f64> = c.practices.iter().map(effective_detection).collect();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let carry_p = if n > 0 { c.prevalence / n as f64 } else { 0.0 };

    let mut events = BinaryHeap::with_capacity(2 * c.lanes.len() + 16);
    let mut seq = 0u64;
    let mut push = |events: &mut BinaryHeap<Reverse<Event>>, time: f64, kind: EventKind| {
        events.push(Reverse(Event { time, kind, seq }));
        seq += 1;
    };

    let rate = n as f64 / c.arrivals.window_s;
    let mut t = 0.0;
    let mut arrival_time = Vec::with_capacity(n);
    for i in 0..n {
        let at = match c.arrivals.process {
            ArrivalProcess::Uniform => i as f64 * c.arrivals.window_s / n as f64,
            ArrivalProcess::Poisson => {
                t += -(1.0 - arrival_rng.random::<f64>()).ln() / rate;
                t
            }
        };
        arrival_time.push(at);
    }

    let mut lanes: Vec<LaneState> = (0..c.lanes.len()).map(|_| LaneState::default()).collect();
    let mut service = vec![0.0f64; n];
    let mut departure = vec![0.0f64; n];
    let mut screened = vec![0u64; c.practices.len()];
    let (mut carriers, mut detected) = (0u64, 0u64);

    // Arrivals are pushed lazily so the heap stays small.
    if n > 0 {
        push(&mut events, arrival_time[0], EventKind::Arrival(0));
    }

    while let Some(Reverse(ev)) = events.pop() {
        match ev.kind {
            EventKind::Arrival(i) => {
                if i + 1 < n {
                    push(&mut events, arrival_time[i + 1], EventKind::Arrival(i + 1));
                }
                let u_route: f64 = routing_rng.random();
                let u_tie: f64 = tie_rng.random();
                let is_carrier = carrier_rng.random::<f64>() < carry_p;
                let u_detect: f64 = detection_rng.random();
                let u_service: f64 = service_rng.random();
                let u_alarm: f64 = alarm_rng.random();

                let (lane, practice) = match c.routing {
                    Routing::RandomSplit => (shortest(&lanes, &all_lanes), pick_weighted(&cumulative, u_route)),
                    Routing::LaneBanks => {
                        let pi = pick_weighted(&cumulative, u_route);
                        (shortest(&lanes, &banks[pi]), pi)
                    }
                    Routing::SelfSelection => {
                        let fewest = lanes.iter().map(LaneState::in_system).min().unwrap_or(0);
                        let tied: Vec<usize> =
                            all_lanes.iter().copied().filter(|&l| lanes[l].in_system() == fewest).collect();
                        let lane = tied[((u_tie * tied.len() as f64) as usize).min(tied.len() - 1)];
                        (lane, lane_practice[lane])
                    }
                };

                let p = &c.practices[practice];
                let alarm = if is_carrier {
                    carriers += 1;
                    let caught = u_detect < eff[practice];
                    if caught {
                        detected += 1;
                    }
                    caught
                } else {
                    u_alarm < p.false_alarm
                };
                let mut s = service_time(&models[practice], u_service, &normal);
                if alarm {
                    s += p.alarm_extra_s;
                }
                service[i] = s;
                screened[practice] += 1;

                let state = &mut lanes[lane];
                if state.in_service.is_none() {
                    state.in_service = Some(i);
                    departure[i] = ev.time + s;
                    push(&mut events, departure[i], EventKind::Departure(lane));
                } else {
                    state.waiting.push_back(i);
                    state.max_waiting = state.max_waiting.max(state.waiting.len() as u64);
                }
            }
            EventKind::Departure(lane) => {
                let state = &mut lanes[lane];
                state.in_service = None;
                if let Some(next) = state.waiting.pop_front() {
                    state.in_service = Some(next);
                    departure[next] = ev.time + service[next];
                    push(&mut events, departure[next], EventKind::Departure(lane));
                }
            }
        }
    }

    let mut sojourn: Vec<f64> = (0..n).map(|i| departure[i] - arrival_time[i]).collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let mean_time_in_system_s = mean(&sojourn);
    let mean_service_s = mean(&service);
    sojourn.sort_by(f64::total_cmp);
    // Nearest-rank 95th percentile.
    let p95_time_in_system_s = if n == 0 { 0.0 } else { sojourn[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1] };

    Ok(SimResult {
        master_seed: c.master_seed,
        replication,
        patrons: n as u64,
        realized_mix: c
            .practices
            .iter()
            .zip(&screened)
            .map(|(p, &k)| PracticeShare {
                practice: p.id.clone(),
                screened: k,
                fraction: if n == 0 { 0.0 } else { k as f64 / n as f64 },
            })
            .collect(),
        mean_time_in_system_s,
        p95_time_in_system_s,
        mean_service_s,
        carriers,
        detected,
        missed: carriers - detected,
        max_queue: c
            .lanes
            .iter()
            .zip(&lanes)
            .map(|(l, s)| LaneQueue { lane: l.id.clone(), max_waiting: s.max_waiting })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixDeviation {
    pub practice: String,
    pub nominal: f64,
    pub realized_mean: f64,
    pub std_error: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub master_seed: u64,
    pub replications: u64,
    pub metrics: Vec<MetricSummary>,
    /// Total detected over total carriers across all replications.
    pub pooled_detection_rate: Option<f64>,
    pub budget_s: Option<f64>,
    /// Fraction of replications whose mean screening time is within budget.
    pub p_within_budget: Option<f64>,
    pub mix_deviation: Vec<MixDeviation>,
    pub results: Vec<SimResult>,
}

impl MonteCarloReport {
    pub fn metric(&self, name: &str) -> Option<&Summary> {
        self.metrics.iter().find(|m| m.metric == name).map(|m| &m.summary)
    }

    pub fn mix_flagged(&self) -> bool {
        self.mix_deviation.iter().any(|d| d.flagged)
    }
}

/// Runs `replications` independent replications in parallel and aggregates them.
pub fn run_monte_carlo(c: &SimConfig, replications: u64) -> Result<MonteCarloReport> {
    c.validate()?;
    if replications == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let results: Vec<SimResult> =
        (0..replications).into_par_iter().map(|r| run_replication(c, r)).collect::<Result<_>>()?;
    Ok(aggregate(c, results))
}

/// Aggregates replication results; the output does not depend on their input order.
pub fn aggregate(c: &SimConfig, mut results: Vec<SimResult>) -> MonteCarloReport {
    results.sort_by_key(|r| r.replication);
    let column = |f: &dyn Fn(&SimResult) -> f64| results.iter().map(f).collect::<Vec<f64>>();
    let mut metrics = vec![
        ("mean_time_in_system_s".to_string(), column(&|r| r.mean_time_in_system_s)),
        ("p95_time_in_system_s".to_string(), column(&|r| r.p95_time_in_system_s)),
        ("mean_service_s".to_string(), column(&|r| r.mean_service_s)),
        ("carriers".to_string(), column(&|r| r.carriers as f64)),
        ("detected".to_string(), column(&|r| r.detected as f64)),
        ("missed".to_string(), column(&|r| r.missed as f64)),
        ("detection_rate".to_string(), results.iter().filter_map(SimResult::detection_rate).collect()),
    ];
    for p in &c.practices {
        metrics.push((format!("fraction:{}", p.id), column(&|r| r.fraction_of(&p.id))));
    }
    for (i, lane) in c.lanes.iter().enumerate() {
        metrics.push((
            format!("max_queue:{}", lane.id),
            column(&|r| r.max_queue.get(i).map_or(0.0, |q| q.max_waiting as f64)),
        ));
    }

    let total_carriers: u64 = results.iter().map(|r| r.carriers).sum();
    let total_detected: u64 = results.iter().map(|r| r.detected).sum();
    let p_within_budget =
        c.budget_s.map(|b| results.iter().filter(|r| r.mean_service_s <= b).count() as f64 / results.len() as f64);

    let reps = results.len();
    let mix_deviation = c
        .practices
        .iter()
        .map(|p| {
            let s = Summary::of(&column(&|r| r.fraction_of(&p.id)));
            let nominal = c.plan.weight_of(&p.id);
            let se = s.std_error(reps);
            let dev = (s.mean - nominal).abs();
            MixDeviation {
                practice: p.id.clone(),
                nominal,
                realized_mean: s.mean,
                std_error: se,
                flagged: dev > MIX_DEVIATION_MIN && dev > MIX_DEVIATION_Z * se,
            }
        })
        .collect();

    MonteCarloReport {
        master_seed: c.master_seed,
        replications: reps as u64,
        metrics: metrics
            .into_iter()
            .map(|(metric, values)| MetricSummary { metric, summary: Summary::of(&values) })
            .collect(),
        pooled_detection_rate: (total_carriers > 0).then(|| total_detected as f64 / total_carriers as f64),
        budget_s: c.budget_s,
        p_within_budget,
        mix_deviation,
        results,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixBias {
    pub practice: String,
    pub nominal: f64,
    pub realized: f64,
}

/// Nominal plan weight against the realized share for each practice in replication 0.
pub fn realized_mix_bias(c: &SimConfig) -> Result<Vec<MixBias>> {
    let r = run_replication(c, 0)?;
    Ok(c.practices
        .iter()
        .map(|p| MixBias { practice: p.id.clone(), nominal: c.plan.weight_of(&p.id), realized: r.fraction_of(&p.id) })
        .collect())
}

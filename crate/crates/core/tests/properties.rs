use proptest::prelude::*;
use rand::Rng;

use screenmix_core::estimators::{coverage_oracle, unchecked_fraction};
use screenmix_core::mixer::{
    efficient_frontier, frontier_detection_at, mix_detection, mix_mean_time, plan_for_budget, BudgetOutcome,
    BudgetQuery,
};
use screenmix_core::model::{effective_detection, MixPlan, Practice};
use screenmix_core::rng::{Purpose, RngContract};
use screenmix_core::schemes::{counting_team_attack, SelectionScheme};
use screenmix_core::simulator::{
    aggregate, run_monte_carlo, run_replication, ArrivalProcess, Arrivals, Lane, Routing, SimConfig,
};

fn practice_strategy() -> impl Strategy<Value = Vec<Practice>> {
    prop::collection::vec((0.0f64..=1.0, 1.0f64..30.0, 0.0f64..0.3), 1..6).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (d, t, m))| Practice::new(format!("P{i}"), d, t).with_operator_miss(m))
            .collect()
    })
}

fn random_plan(practices: &[Practice], rng: &mut impl Rng) -> MixPlan {
    let raw: Vec<f64> = practices.iter().map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<(String, f64)> = practices.iter().zip(&raw).map(|(p, w)| (p.id.clone(), w / total)).collect();
    // Push rounding into the last weight so the sum is 1 within tolerance.
    let head: f64 = weights[..weights.len() - 1].iter().map(|w| w.1).sum();
    weights.last_mut().unwrap().1 = (1.0 - head).max(0.0);
    MixPlan::new(weights).unwrap()
}

/// Best detection among all two-practice mixes on a 1e-4 grid that fit the budget.
fn grid_oracle(practices: &[Practice], budget: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for a in practices {
        for b in practices {
            for step in 0..=10_000 {
                let f = step as f64 * 1e-4;
                let t = f * a.mean_time_s() + (1.0 - f) * b.mean_time_s();
                if t <= budget {
                    let d = f * effective_detection(a) + (1.0 - f) * effective_detection(b);
                    best = Some(best.map_or(d, |x: f64| x.max(d)));
                }
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixing_is_linear(practices in practice_strategy(), seed in any::<u64>(), lambda in 0.0f64..=1.0) {
        let mut rng = RngContract::new(seed).stream(0, Purpose::Routing);
        let p = random_plan(&practices, &mut rng);
        let q = random_plan(&practices, &mut rng);
        let blend = p.blend(&q, lambda).unwrap();
        let d = mix_detection(&blend, &practices).unwrap();
        let d_lin = lambda * mix_detection(&p, &practices).unwrap() + (1.0 - lambda) * mix_detection(&q, &practices).unwrap();
        prop_assert!((d - d_lin).abs() < 1e-9);
        let t = mix_mean_time(&blend, &practices).unwrap();
        let t_lin = lambda * mix_mean_time(&p, &practices).unwrap() + (1.0 - lambda) * mix_mean_time(&q, &practices).unwrap();
        prop_assert!((t - t_lin).abs() < 1e-9 * t_lin.max(1.0));
    }

    #[test]
    fn frontier_dominates_random_plans(practices in practice_strategy(), seed in any::<u64>()) {
        let frontier = efficient_frontier(&practices).unwrap();
        for w in frontier.windows(2) {
            prop_assert!(w[1].mean_time_s > w[0].mean_time_s);
            prop_assert!(w[1].detection > w[0].detection);
        }
        let mut rng = RngContract::new(seed).stream(0, Purpose::Routing);
        for _ in 0..1000 {
            let plan = random_plan(&practices, &mut rng);
            let t = mix_mean_time(&plan, &practices).unwrap();
            let d = mix_detection(&plan, &practices).unwrap();
            let bound = frontier_detection_at(&frontier, t).expect("no plan is faster than the fastest vertex");
            prop_assert!(d <= bound + 1e-9, "plan {} at ({t}, {d}) above frontier {bound}", plan);
        }
    }

    #[test]
    fn budget_plan_is_optimal(practices in practice_strategy(), budget in 0.5f64..32.0) {
        let outcome = plan_for_budget(&practices, &BudgetQuery::new(budget).unwrap()).unwrap();
        let oracle = grid_oracle(&practices, budget);
        match outcome {
            BudgetOutcome::Feasible(c) => {
                prop_assert!(c.mean_time_s <= budget + 1e-9);
                prop_assert!((mix_detection(&c.plan, &practices).unwrap() - c.detection).abs() < 1e-9);
                let best = oracle.expect("grid finds a feasible plan too");
                prop_assert!(best <= c.detection + 1e-6, "grid {best} beats planner {}", c.detection);
            }
            BudgetOutcome::Infeasible(_) => prop_assert!(oracle.is_none()),
        }
    }

    #[test]
    fn budget_at_vertex_is_pure(practices in practice_strategy()) {
        for v in efficient_frontier(&practices).unwrap() {
            let c = plan_for_budget(&practices, &BudgetQuery::new(v.mean_time_s).unwrap()).unwrap();
            let c = c.choice().unwrap().clone();
            prop_assert_eq!(c.plan, v.plan);
        }
    }
}

fn two_practice_sim(patrons: usize, routing: Routing, weight_a: f64, seed: u64) -> SimConfig {
    SimConfig {
        practices: vec![Practice::new("A", 0.95, 10.0), Practice::new("B", 0.75, 6.0)],
        plan: MixPlan::new([("A", weight_a), ("B", 1.0 - weight_a)]).unwrap(),
        lanes: (0..8)
            .map(|i| Lane { id: format!("L{i}"), practice: if i % 2 == 0 { "A" } else { "B" }.into() })
            .collect(),
        routing,
        arrivals: Arrivals { patrons, window_s: patrons as f64 * 2.0, process: ArrivalProcess::Poisson },
        prevalence: 25.0,
        budget_s: Some(8.0),
        master_seed: seed,
    }
}

#[test]
fn simulation_agrees_with_closed_form() {
    let c = two_practice_sim(5_000, Routing::RandomSplit, 0.5, 11);
    let reps = 400;
    let report = run_monte_carlo(&c, reps).unwrap();
    let service = report.metric("mean_service_s").unwrap();
    let want_t = mix_mean_time(&c.plan, &c.practices).unwrap();
    assert!((service.mean - want_t).abs() <= 3.0 * service.std_error(reps as usize), "{service:?}");

    let carriers: u64 = report.results.iter().map(|r| r.carriers).sum();
    let want_d = mix_detection(&c.plan, &c.practices).unwrap();
    let se = (want_d * (1.0 - want_d) / carriers as f64).sqrt();
    let got = report.pooled_detection_rate.unwrap();
    assert!((got - want_d).abs() <= 3.0 * se, "pooled {got} vs {want_d} (se {se})");

    for r in &report.results {
        assert_eq!(r.detected + r.missed, r.carriers);
        let screened: u64 = r.realized_mix.iter().map(|s| s.screened).sum();
        assert_eq!(screened, r.patrons);
    }
}

#[test]
fn operator_miss_lowers_simulated_detection() {
    let mut c = two_practice_sim(2_000, Routing::RandomSplit, 1.0, 12);
    c.practices[0] = c.practices[0].clone().with_operator_miss(0.15);
    let report = run_monte_carlo(&c, 600).unwrap();
    let carriers: u64 = report.results.iter().map(|r| r.carriers).sum();
    let se = (0.8075 * 0.1925 / carriers as f64).sqrt();
    assert!((report.pooled_detection_rate.unwrap() - 0.8075).abs() <= 3.0 * se);
}

#[test]
fn more_weight_on_sensitive_practice_never_hurts() {
    let weights = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut previous = -1.0;
    for w in weights {
        let r = run_monte_carlo(&two_practice_sim(1_000, Routing::RandomSplit, w, 13), 200).unwrap();
        let detected = r.metric("detected").unwrap().mean;
        assert!(detected >= previous, "weight {w}: {detected} < {previous}");
        previous = detected;
    }
}

#[test]
fn seeded_runs_are_reproducible_and_order_free() {
    let c = two_practice_sim(800, Routing::LaneBanks, 0.5, 14);
    let a = run_monte_carlo(&c, 20).unwrap();
    let b = run_monte_carlo(&c, 20).unwrap();
    assert_eq!(a, b);
    let mut shuffled: Vec<_> = (0..20).rev().map(|r| run_replication(&c, r).unwrap()).collect();
    shuffled.swap(3, 11);
    assert_eq!(aggregate(&c, shuffled), a);
    let other = run_monte_carlo(&SimConfig { master_seed: 15, ..c.clone() }, 20).unwrap();
    assert_ne!(other.results, a.results);
}

#[test]
fn closed_form_coverage_matches_brute_force() {
    let rng = RngContract::new(99);
    for (i, &p) in [0.05, 0.1, 0.25, 0.5].iter().enumerate() {
        for (j, &years) in [1u32, 2, 5, 10].iter().enumerate() {
            let mut s = rng.stream((i * 4 + j) as u64, Purpose::Coverage);
            let o = coverage_oracle(500, p, years, 200, &mut s).unwrap();
            let exact = unchecked_fraction(p, years).unwrap();
            assert!(
                (o.mean_unchecked - exact).abs() <= 3.0 * o.std_error,
                "p={p} years={years}: {} vs {exact} (se {})",
                o.mean_unchecked,
                o.std_error
            );
        }
    }
}

#[test]
fn swapping_cannot_beat_iid_selection() {
    let trials = 10_000;
    for (i, p) in [0.05, 0.1, 0.3, 0.5].into_iter().enumerate() {
        for scheme in [SelectionScheme::HiddenDevice { p }, SelectionScheme::VisibleDevice { p }] {
            let mut s = RngContract::new(5).stream(i as u64, Purpose::Attack);
            let got = counting_team_attack(&scheme, trials, &mut s);
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((got - p).abs() <= 3.0 * se, "{scheme:?}: {got}");
        }
    }
}

use lineplan::evaluate::{self, brute_force, configuration_count, diff_plans, shortest_path_gjt, LinePlan};
use lineplan::fixtures::{case_study_costs, figure_instance, tiny_instance, TinySpec};
use lineplan::instance::{LineSpec, PeriodSpec, Section, Station, DEFAULT_DELTA};
use lineplan::{build_graph, Error, Mode, ProblemInstance};
use proptest::prelude::*;

fn station(id: &str, terminal: bool) -> Station {
    Station { id: id.into(), name: id.into(), is_terminal: terminal, is_transfer: terminal }
}

/// One line A-B-C with frequencies {2, 4} over `periods` periods.
fn one_line(periods: usize, mode: Mode) -> ProblemInstance {
    let inst = ProblemInstance::new(
        vec![station("A", true), station("B", false), station("C", true)],
        vec![
            Section { from: "A".into(), to: "B".into(), minutes: 5.0, km: 6.0 },
            Section { from: "B".into(), to: "C".into(), minutes: 4.0, km: 5.0 },
        ],
        vec![LineSpec {
            id: "A-C".into(),
            route: vec!["A".into(), "B".into(), "C".into()],
            frequencies: vec![2, 4],
            capacity: 200,
            length_km: None,
        }],
        (0..periods)
            .map(|_| PeriodSpec {
                name: None,
                length_hours: 2.0,
                budget: 200.0,
                demand: vec![("A".into(), "C".into(), 30.0), ("B".into(), "C".into(), 10.0)],
            })
            .collect(),
        case_study_costs(),
        Mode::Symmetric,
        DEFAULT_DELTA,
    )
    .unwrap();
    inst.with_mode(mode).unwrap()
}

#[test]
fn skipped_stop_path_cost() {
    let inst = figure_instance(Mode::Symmetric);
    let g = build_graph(&inst).unwrap();
    let mut plan = LinePlan::uniform(&inst, |_| 2);
    plan.stops[0][0][1] = false;
    let r = evaluate::assign(&inst, &g, &plan).unwrap();
    // board at frequency 2, drive 6 + 7 minutes, pass Bb for free, alight
    let per_passenger = 31.85 + 6.0 + 0.0 + 7.0 + 0.7;
    assert!((r.gjt - 5.0 * per_passenger).abs() < 1e-6, "{}", r.gjt);
}

#[test]
fn zero_demand_costs_nothing() {
    let mut inst = one_line(2, Mode::Symmetric);
    for p in &mut inst.periods {
        p.demand = lineplan::OdMatrix::zeros(inst.stations.len());
    }
    let g = build_graph(&inst).unwrap();
    let r = evaluate::assign(&inst, &g, &LinePlan::uniform(&inst, |_| 2)).unwrap();
    assert_eq!(r.gjt, 0.0);
    assert!(r.flows.iter().all(|f| *f == 0.0));
}

#[test]
fn unused_line_leaves_demand_unroutable() {
    let inst = one_line(1, Mode::Symmetric);
    let g = build_graph(&inst).unwrap();
    let err = evaluate::assign(&inst, &g, &LinePlan::uniform(&inst, |_| 0)).unwrap_err();
    assert!(matches!(err, Error::Unroutable { .. }), "{err}");
}

#[test]
fn over_budget_plan_is_rejected() {
    let mut inst = one_line(1, Mode::Symmetric);
    inst.periods[0].budget = 50.0;
    let g = build_graph(&inst).unwrap();
    let err = evaluate::assign(&inst, &g, &LinePlan::uniform(&inst, |_| 4)).unwrap_err();
    assert!(matches!(err, Error::InfeasiblePlan(_)), "{err}");
}

#[test]
fn configuration_counting() {
    assert_eq!(configuration_count(&one_line(2, Mode::Symmetric)), 36.0);
}

#[test]
fn brute_force_guard() {
    let inst = tiny_instance(&TinySpec { seed: 3, mode: Mode::Asymmetric, routes: 2, periods: 3 });
    assert!(configuration_count(&inst) > evaluate::BRUTE_FORCE_LIMIT);
    assert!(matches!(brute_force(&inst, 0), Err(Error::GuardExceeded { .. })));
}

#[test]
fn zero_limit_oracle_keeps_plan_constant() {
    for seed in [2, 3, 5, 9] {
        let inst = tiny_instance(&TinySpec { seed, mode: Mode::Symmetric, routes: 2, periods: 2 });
        if let Some((plan, _)) = brute_force(&inst, 0).unwrap() {
            assert_eq!(plan.total_changes(&inst), 0);
            assert!(diff_plans(&plan, &inst).is_empty());
        }
    }
}

#[test]
fn oracle_value_is_monotone_in_limit() {
    let inst = tiny_instance(&TinySpec { seed: 2, mode: Mode::Symmetric, routes: 2, periods: 2 });
    let values: Vec<f64> = [0, 2, 4, 8]
        .into_iter()
        .map(|e| brute_force(&inst, e).unwrap().map_or(f64::INFINITY, |(_, g)| g))
        .collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{values:?}");
}

#[test]
fn revenue_impact_is_linear() {
    assert!((evaluate::revenue_impact(-10.0, -0.81) - 8.1).abs() < 1e-12);
    assert_eq!(evaluate::revenue_impact(0.0, -0.81), 0.0);
}

fn uncapacitated(seed: u64) -> ProblemInstance {
    let mut inst = tiny_instance(&TinySpec { seed, mode: Mode::Symmetric, routes: 2, periods: 2 });
    let total: f64 = inst.periods.iter().map(|p| p.demand.total()).sum();
    for l in &mut inst.lines {
        l.capacity = total.ceil() as u32 + 1;
    }
    for p in &mut inst.periods {
        p.budget = 1e9;
    }
    inst
}

fn arbitrary_plan(inst: &ProblemInstance, picks: &[u8], stops: &[bool]) -> LinePlan {
    let mut plan = LinePlan::uniform(inst, |_| 0);
    let mut k = 0;
    for p in 0..inst.periods.len() {
        for (l, line) in inst.lines.iter().enumerate() {
            let f = &line.frequencies;
            plan.frequency[p][l] = f[picks[k % picks.len()] as usize % f.len()];
            for j in line.intermediate_positions() {
                plan.stops[p][l][j] = stops[k % stops.len()];
                k += 1;
            }
            k += 1;
        }
    }
    plan
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn uncapacitated_assignment_is_shortest_paths(
        seed in 0u64..40,
        picks in proptest::collection::vec(0u8..4, 1..8),
        stops in proptest::collection::vec(any::<bool>(), 1..8),
    ) {
        let inst = uncapacitated(seed);
        let g = build_graph(&inst).unwrap();
        let plan = arbitrary_plan(&inst, &picks, &stops);
        match (shortest_path_gjt(&inst, &g, &plan), evaluate::assign(&inst, &g, &plan)) {
            (Ok(sp), Ok(r)) => prop_assert!((r.gjt - sp).abs() <= 1e-6 * sp.max(1.0), "{} vs {}", r.gjt, sp),
            // skipped stops can cut a station off
            (Err(Error::Unroutable { .. }), Err(Error::Unroutable { .. })) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {:?}", b.map(|r| r.gjt)),
        }
    }

    #[test]
    fn plan_files_round_trip(
        seed in 0u64..40,
        picks in proptest::collection::vec(0u8..4, 1..8),
        stops in proptest::collection::vec(any::<bool>(), 1..8),
    ) {
        let inst = tiny_instance(&TinySpec { seed, mode: Mode::Asymmetric, routes: 2, periods: 3 });
        let plan = arbitrary_plan(&inst, &picks, &stops);
        let text = plan.to_toml_string(&inst);
        prop_assert_eq!(LinePlan::from_toml_str(&inst, &text).unwrap(), plan);
    }

    #[test]
    fn diff_matches_change_counts(
        seed in 0u64..40,
        picks in proptest::collection::vec(0u8..4, 1..8),
        stops in proptest::collection::vec(any::<bool>(), 1..8),
    ) {
        let inst = tiny_instance(&TinySpec { seed, mode: Mode::Symmetric, routes: 2, periods: 3 });
        let plan = arbitrary_plan(&inst, &picks, &stops);
        let diffs = diff_plans(&plan, &inst);
        let sigma = inst.sigma() as u32;
        let freq = diffs.iter().filter(|d| matches!(d, evaluate::PlanChange::Frequency { .. })).count() as u32;
        let (f, s) = plan.change_counts(&inst);
        prop_assert_eq!(f, sigma * freq);
        prop_assert_eq!(s, sigma * (diffs.len() as u32 - freq));
    }
}

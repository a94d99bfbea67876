use std::path::Path;

use lineplan::evaluate::LinePlan;
use lineplan::fixtures::{figure_instance, tiny_instance, TinySpec};
use lineplan::pareto::{count_adjustments, max_adjustments, PointStatus};
use lineplan::solve::normalize;
use lineplan::{build_graph, build_model, load_instance, run_frontier, FrontierOptions, Mode, ModelOptions, SolveStatus};
use proptest::prelude::*;

fn t1() -> lineplan::ProblemInstance {
    load_instance(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/t1.inst")).unwrap()
}

#[test]
fn max_adjustment_formula() {
    // one line with one intermediate station over a single period
    let mut inst = figure_instance(Mode::Symmetric);
    assert_eq!(max_adjustments(&inst), 0);
    let p = inst.periods[0].clone();
    inst.periods.push(p.clone());
    assert_eq!(max_adjustments(&inst), 4);
    inst.mode = Mode::Asymmetric;
    assert_eq!(max_adjustments(&inst), 2);
    inst.periods.push(p);
    assert_eq!(max_adjustments(&inst), 4);
}

#[test]
fn symmetric_frequency_swing_counts_twice_per_transition() {
    let inst = tiny_instance(&TinySpec { seed: 12, mode: Mode::Symmetric, routes: 1, periods: 3 });
    let g = build_graph(&inst).unwrap();
    let model = build_model(&g, &inst, &ModelOptions::with_epsilon(max_adjustments(&inst)));
    let f = &inst.lines[0].frequencies;
    let mut plan = LinePlan::uniform(&inst, |_| f[1]);
    plan.frequency[1][0] = f[0];
    let mut values = plan.to_values(&model, &inst);
    normalize(&model, &mut values);
    let adj = count_adjustments(&model, &inst, &values).unwrap();
    assert_eq!((adj.frequency, adj.stop), (4, 0));

    // a single toggled stop in one transition
    let mut plan = LinePlan::uniform(&inst, |_| f[0]);
    plan.stops[2][0][1] = false;
    let mut values = plan.to_values(&model, &inst);
    normalize(&model, &mut values);
    let adj = count_adjustments(&model, &inst, &values).unwrap();
    assert_eq!((adj.frequency, adj.stop), (0, 2));

    // change variables that disagree with the binaries
    values[model.change_freq[0][0]] = 2.0;
    assert!(count_adjustments(&model, &inst, &values).is_err());
}

#[test]
fn explicit_list_keeps_input_order() {
    let inst = t1();
    let opts = FrontierOptions { epsilons: Some(vec![4, 0, 2]), ..Default::default() };
    let set = run_frontier(&inst, &opts).unwrap();
    let eps: Vec<u32> = set.points.iter().map(|p| p.epsilon).collect();
    assert_eq!(eps, vec![4, 0, 2]);
    for p in &set.points {
        assert!(p.total_adjustments().unwrap() <= p.epsilon);
    }
}

#[test]
fn descending_loop_skips_to_realised_count() {
    let inst = t1();
    let set = run_frontier(&inst, &FrontierOptions::default()).unwrap();
    assert_eq!(set.points[0].epsilon, max_adjustments(&inst));
    for w in set.points.windows(2) {
        let c = w[0].total_adjustments().unwrap();
        assert_eq!(w[1].epsilon, c.min(w[0].epsilon) - 1);
    }
    let last = set.points.last().unwrap();
    assert!(last.total_adjustments() == Some(0) || last.status == PointStatus::Solved(SolveStatus::Infeasible));

    // every skipped limit has the same optimum as the point that skipped it
    for p in set.points.iter().filter(|p| p.is_feasible()) {
        let c = p.total_adjustments().unwrap();
        if c < p.epsilon {
            let direct = run_frontier(&inst, &FrontierOptions { epsilons: Some(vec![c]), ..Default::default() }).unwrap();
            let g = direct.points[0].gjt;
            assert!((g - p.gjt).abs() <= 1e-6 * p.gjt, "limit {c}: {g} vs {}", p.gjt);
        }
    }

    let front = set.frontier();
    for w in front.windows(2) {
        assert!(w[0].total_adjustments() < w[1].total_adjustments());
        assert!(w[1].gjt < w[0].gjt);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn normalised_plans_count_consistently(
        seed in 0u64..60,
        asym in any::<bool>(),
        picks in proptest::collection::vec(0usize..3, 12),
        stops in proptest::collection::vec(any::<bool>(), 12),
    ) {
        let mode = if asym { Mode::Asymmetric } else { Mode::Symmetric };
        let inst = tiny_instance(&TinySpec { seed, mode, routes: 2, periods: 3 });
        let g = build_graph(&inst).unwrap();
        let model = build_model(&g, &inst, &ModelOptions::with_epsilon(max_adjustments(&inst)));
        let mut plan = LinePlan::uniform(&inst, |_| 0);
        let mut k = 0;
        for p in 0..inst.periods.len() {
            for (l, line) in inst.lines.iter().enumerate() {
                plan.frequency[p][l] = line.frequencies[picks[k % 12] % line.frequencies.len()];
                for j in line.intermediate_positions() {
                    plan.stops[p][l][j] = stops[(k + j) % 12];
                }
                k += 1;
            }
        }
        let mut values = plan.to_values(&model, &inst);
        normalize(&model, &mut values);
        let adj = count_adjustments(&model, &inst, &values).unwrap();
        prop_assert_eq!((adj.frequency, adj.stop), plan.change_counts(&inst));
        prop_assert!(adj.total() <= max_adjustments(&inst));
        prop_assert_eq!(adj.frequency % inst.sigma() as u32, 0);
        let slack = values[model.slack.unwrap()];
        prop_assert!((slack + adj.total() as f64 - max_adjustments(&inst) as f64).abs() < 1e-9);
    }
}

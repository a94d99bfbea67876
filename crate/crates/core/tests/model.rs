use std::collections::HashSet;
use std::path::Path;

use lineplan::fixtures::{tiny_instance, TinySpec};
use lineplan::solve::mps;
use lineplan::{build_graph, build_model, load_instance, Error, Mode, ModelOptions, VarKind};
use proptest::prelude::*;

fn fixture(name: &str) -> lineplan::ProblemInstance {
    load_instance(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)).unwrap()
}

#[test]
fn mps_layout() {
    let inst = fixture("t2.inst");
    let g = build_graph(&inst).unwrap();
    let model = build_model(&g, &inst, &ModelOptions::with_epsilon(3));
    let (text, names) = mps::to_mps(&model, &inst).unwrap();
    let sections: Vec<&str> = text.lines().filter(|l| !l.starts_with(' ')).collect();
    assert_eq!(sections, ["NAME          LINEPLAN", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"]);
    assert!(text.contains(" N  COST\n"));
    let binaries = model.binaries().count();
    assert_eq!(text.lines().filter(|l| l.starts_with(" BV ")).count(), binaries);
    // the slack is the only bounded continuous column
    assert_eq!(text.lines().filter(|l| l.starts_with(" UP ")).count(), 1);

    let entries: Vec<&str> = names.lines().collect();
    assert_eq!(entries.len(), model.num_rows() + model.num_vars());
    let long: HashSet<&str> = entries.iter().map(|l| l.split_once(' ').unwrap().1).collect();
    assert_eq!(long.len(), entries.len());
    for code in entries.iter().map(|l| l.split_once(' ').unwrap().0) {
        assert_eq!(code.len(), 8);
    }
    assert!(long.contains("budget[2]"));
    assert!(long.contains("slack"));
}

#[test]
fn own_solution_round_trips() {
    let inst = fixture("t1.inst");
    let g = build_graph(&inst).unwrap();
    let model = build_model(&g, &inst, &ModelOptions::with_epsilon(2));
    let sol = lineplan::solve(&model, &lineplan::SolveLimits::default()).unwrap();
    let text = mps::solution_text(&model, &inst, &sol.values);
    let back = mps::import_solution_str(&model, &inst, &text).unwrap();
    assert!((back.objective - sol.objective).abs() <= 1e-9 * sol.objective.abs().max(1.0));
    assert_eq!(mps::parse_solution(&model, &inst, &text).unwrap().len(), model.num_vars());

    // switch on every frequency of period 2
    let mut bad = text.clone();
    for v in 0..model.num_vars() {
        if matches!(model.variables[v].kind, VarKind::Freq { period: 1, .. }) {
            bad.push_str(&format!("{} 1\n", model.var_name(v, &inst)));
        }
    }
    match mps::import_solution_str(&model, &inst, &bad) {
        Err(Error::ConstraintViolation { tag, .. }) => assert!(!tag.is_empty()),
        other => panic!("expected a violated row, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn model_sizes_follow_graph(seed in 0u64..200, asym in any::<bool>(), routes in 1usize..=2, periods in 1usize..=3) {
        let mode = if asym { Mode::Asymmetric } else { Mode::Symmetric };
        let inst = tiny_instance(&TinySpec { seed, mode, routes, periods });
        let g = build_graph(&inst).unwrap();
        let model = build_model(&g, &inst, &ModelOptions::with_epsilon(2));
        let (s, p) = (inst.num_stations(), inst.periods.len());
        prop_assert_eq!(model.flows.len(), g.num_arcs() * s * p);
        let flows = model.variables.iter().filter(|v| matches!(v.kind, VarKind::Flow { .. })).count();
        prop_assert_eq!(flows, g.num_arcs() * s * p);
        let conservation = model.constraints.iter().filter(|c| c.tag.starts_with("flowcons[")).count();
        prop_assert_eq!(conservation, g.num_nodes() * s * p);
        let freq = model.variables.iter().filter(|v| matches!(v.kind, VarKind::Freq { .. })).count();
        prop_assert_eq!(freq, p * inst.lines.iter().map(|l| l.frequencies.len()).sum::<usize>());
        let stop = model.variables.iter().filter(|v| matches!(v.kind, VarKind::Stop { .. })).count();
        prop_assert_eq!(stop, p * inst.lines.iter().map(|l| l.num_intermediate()).sum::<usize>());
        for c in &model.constraints {
            prop_assert!(c.terms.iter().all(|(_, a)| *a != 0.0));
        }
        let tags: HashSet<&str> = model.constraints.iter().map(|c| c.tag.as_str()).collect();
        prop_assert_eq!(tags.len(), model.num_rows());
    }

    #[test]
    fn symmetric_graph_is_smaller(seed in 0u64..200, routes in 1usize..=2) {
        let sym = tiny_instance(&TinySpec { seed, mode: Mode::Symmetric, routes, periods: 1 });
        let asym = tiny_instance(&TinySpec { seed, mode: Mode::Asymmetric, routes, periods: 1 });
        prop_assert!(build_graph(&sym).unwrap().num_arcs() < build_graph(&asym).unwrap().num_arcs());
    }
}

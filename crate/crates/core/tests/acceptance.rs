//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! The desk-scale frontier (criterion 10) runs for up to 30 minutes; set
//! `LINEPLAN_SKIP_SLOW=1` to report it as skipped.

use std::path::PathBuf;
use std::time::Instant;

use lineplan::evaluate::{self, audit_solution, brute_force};
use lineplan::fixtures::{case_study_costs, figure_instance, tiny_instance, TinySpec};
use lineplan::pareto::{self, max_adjustments, FrontierOptions, PointStatus};
use lineplan::solve::{self, mps, per_period_bound, SolveLimits, SolveStatus};
use lineplan::{build_graph, build_model, load_instance, Mode, ModelOptions, ProblemInstance};

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Tiny instances of the oracle comparison: symmetric ones with one or two
/// routes, asymmetric ones with one route (two mirrored lines) so that the
/// exhaustive search stays under its configuration guard.
fn tiny_set() -> Vec<ProblemInstance> {
    let mut out = Vec::new();
    for seed in 0..20u64 {
        out.push(tiny_instance(&TinySpec { seed, mode: Mode::Symmetric, routes: 1 + (seed % 2) as usize, periods: 2 }));
        out.push(tiny_instance(&TinySpec { seed: 100 + seed, mode: Mode::Asymmetric, routes: 1, periods: 2 }));
    }
    out
}

struct Solved {
    instance: ProblemInstance,
    epsilon: u32,
    solution: solve::Solution,
}

fn solve_at(instance: &ProblemInstance, epsilon: u32, pair: bool) -> solve::Solution {
    let graph = build_graph(instance).unwrap();
    let model = build_model(&graph, instance, &ModelOptions { epsilon, multi_period: true, pair_directions: pair });
    lineplan::solve(&model, &SolveLimits::unlimited()).unwrap()
}

fn criterion_1(solved: &mut Vec<Solved>) -> Outcome {
    let mut checked = 0;
    let mut slowest: f64 = 0.0;
    for (i, inst) in tiny_set().iter().enumerate() {
        let start = Instant::now();
        for epsilon in [0, 2, max_adjustments(inst)] {
            let s = solve_at(inst, epsilon, false);
            let oracle = brute_force(inst, epsilon).map_err(|e| format!("instance {i}: {e}"))?;
            match (&oracle, s.status) {
                (None, SolveStatus::Infeasible) => {}
                (Some((_, gjt)), SolveStatus::Optimal) => {
                    if rel_diff(*gjt, s.gjt) > 1e-6 {
                        return Err(format!("instance {i} eps {epsilon}: solve {} oracle {gjt}", s.gjt));
                    }
                }
                _ => return Err(format!("instance {i} eps {epsilon}: solve {:?}, oracle {:?}", s.status, oracle.map(|o| o.1))),
            }
            if s.status == SolveStatus::Optimal {
                solved.push(Solved { instance: inst.clone(), epsilon, solution: s });
            }
            checked += 1;
        }
        let t = start.elapsed().as_secs_f64();
        slowest = slowest.max(t);
        if t >= 60.0 {
            return Err(format!("instance {i} took {t:.1} s"));
        }
    }
    Ok(format!("{checked} solves match the oracle, slowest instance {slowest:.2} s"))
}

fn criterion_2() -> Outcome {
    let one_way = build_graph(&figure_instance(Mode::Asymmetric)).map_err(|e| e.to_string())?;
    let both = build_graph(&figure_instance(Mode::Symmetric)).map_err(|e| e.to_string())?;
    // Drive, Skip, Stop, In, Out, ChIn, ChOut
    let want_one = (13, 16, [2, 1, 1, 4, 2, 4, 2]);
    let want_both = (15, 24, [4, 1, 1, 6, 3, 6, 3]);
    let got_one = (one_way.num_nodes(), one_way.num_arcs(), one_way.kind_counts());
    let got_both = (both.num_nodes(), both.num_arcs(), both.kind_counts());
    if got_one != want_one || got_both != want_both {
        return Err(format!("one-way {got_one:?}, both directions {got_both:?}"));
    }
    Ok("13/16 and 15/24 with exact kind breakdown".into())
}

fn criterion_3() -> Outcome {
    let loaded = load_instance(fixture("nl-south.inst")).map_err(|e| e.to_string())?.arc_costs;
    let expected_in = [(1, 55.85), (2, 31.85), (4, 17.35), (6, 10.85)];
    let expected_change = [(1, 50.25), (2, 28.85), (4, 19.95), (6, 15.55)];
    for (f, c) in expected_in {
        if loaded.in_cost(f).ok() != Some(c) {
            return Err(format!("in F{f}: {:?}", loaded.in_cost(f)));
        }
    }
    for (f, c) in expected_change {
        if loaded.in_change_cost(f).ok() != Some(c) {
            return Err(format!("in-change F{f}: {:?}", loaded.in_change_cost(f)));
        }
    }
    if loaded.out_cost != 0.7 || loaded.out_change_cost != 0.7 || loaded.skip_cost != 0.0 || loaded.stop_cost != 3.55 {
        return Err(format!("out/skip/stop: {loaded:?}"));
    }
    if 2.0 + 0.85 + 0.70 != 3.55 || loaded != case_study_costs() {
        return Err("stop decomposition or built-in table differs".into());
    }
    Ok("table matches bit for bit; 2 + 0.85 + 0.70 = 3.55".into())
}

fn criterion_4(solved: &[Solved]) -> Outcome {
    for (i, s) in solved.iter().enumerate() {
        let inst = &s.instance;
        let graph = build_graph(inst).unwrap();
        let model = build_model(&graph, inst, &ModelOptions::with_epsilon(s.epsilon));
        let audit = audit_solution(inst, &graph, &model, &s.solution.values).map_err(|e| format!("solve {i}: {e}"))?;
        let total = (audit.freq_changes + audit.stop_changes) as f64 + audit.slack;
        if total != s.epsilon as f64 {
            return Err(format!("solve {i}: changes + slack = {total}, epsilon {}", s.epsilon));
        }
        for (p, used) in audit.budget_used.iter().enumerate() {
            if *used > inst.periods[p].budget {
                return Err(format!("solve {i}: period {} uses {used} of {}", p + 1, inst.periods[p].budget));
            }
        }
        if audit.max_residual >= 1e-6 {
            return Err(format!("solve {i}: conservation residual {}", audit.max_residual));
        }
        // plan.check inside the audit covers terminal balance in asymmetric mode
    }
    Ok(format!("{} solutions audited", solved.len()))
}

fn criterion_5() -> Outcome {
    let mut frontiers = 0;
    let mut bypass = 0;
    for (i, inst) in tiny_set().iter().enumerate().step_by(4) {
        let set = pareto::run_frontier(inst, &FrontierOptions::default()).map_err(|e| e.to_string())?;
        let mut pts: Vec<_> = set.points.iter().filter(|p| p.is_feasible()).collect();
        if pts.iter().any(|p| p.status != PointStatus::Solved(SolveStatus::Optimal)) {
            continue;
        }
        pts.sort_by_key(|p| p.epsilon);
        for w in pts.windows(2) {
            if w[1].gjt > w[0].gjt * (1.0 + 1e-9) + 1e-9 {
                return Err(format!("instance {i}: gjt rises from {} to {} between eps {} and {}", w[0].gjt, w[1].gjt, w[0].epsilon, w[1].epsilon));
            }
        }
        for p in &pts {
            let c = p.total_adjustments().unwrap();
            for e in c..p.epsilon {
                let s = solve_at(inst, e, false);
                if rel_diff(s.gjt, p.gjt) > 1e-6 {
                    return Err(format!("instance {i}: skipped eps {e} gives {} instead of {}", s.gjt, p.gjt));
                }
                bypass += 1;
            }
        }
        frontiers += 1;
    }
    Ok(format!("{frontiers} frontiers monotone, {bypass} skipped limits re-solved"))
}

fn criterion_6() -> Outcome {
    let mut compared = 0;
    let mut paired = 0;
    for seed in 0..8u64 {
        let sym = tiny_instance(&TinySpec { seed: 200 + seed, mode: Mode::Symmetric, routes: 1 + (seed % 2) as usize, periods: 2 });
        let asym = sym.with_mode(Mode::Asymmetric).map_err(|e| e.to_string())?;
        for epsilon in [0, 2, 4] {
            let s = solve_at(&sym, epsilon, false);
            let a = solve_at(&asym, epsilon, false);
            if s.status != SolveStatus::Optimal || a.status != SolveStatus::Optimal {
                continue;
            }
            if a.gjt > s.gjt * (1.0 + 1e-9) {
                return Err(format!("seed {seed} eps {epsilon}: asymmetric {} above symmetric {}", a.gjt, s.gjt));
            }
            compared += 1;
            if epsilon == 0 {
                let p = solve_at(&asym, epsilon, true);
                if rel_diff(p.gjt, s.gjt) > 1e-6 {
                    return Err(format!("seed {seed}: paired asymmetric {} vs symmetric {}", p.gjt, s.gjt));
                }
                paired += 1;
            }
        }
    }
    if paired < 5 {
        return Err(format!("only {paired} paired comparisons"));
    }
    Ok(format!("{compared} dominance checks, {paired} paired fixtures reproduce the symmetric optimum"))
}

fn criterion_7() -> Outcome {
    let a = evaluate::revenue_impact(-4.26, -0.81);
    let b = evaluate::revenue_impact(-1.94, -0.81);
    if (a - 3.45).abs() > 0.01 || (b - 1.57).abs() > 0.01 {
        return Err(format!("{a} and {b}"));
    }
    Ok(format!("{a:.4}% and {b:.4}%"))
}

fn criterion_8() -> Outcome {
    let inst = load_instance(fixture("t1.inst")).map_err(|e| e.to_string())?;
    let graph = build_graph(&inst).unwrap();
    let model = build_model(&graph, &inst, &ModelOptions::with_epsilon(2));
    let sol = lineplan::solve(&model, &SolveLimits::unlimited()).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    let mps_path = dir.path().join("t1.mps");
    mps::export_mps(&model, &inst, &mps_path).map_err(|e| e.to_string())?;
    let sol_path = dir.path().join("t1.sol");
    mps::write_solution(&model, &inst, &sol.values, &sol_path).map_err(|e| e.to_string())?;
    let back = mps::import_solution(&model, &inst, &sol_path).map_err(|e| e.to_string())?;
    if (back.objective - sol.objective).abs() > 1e-9 {
        return Err(format!("objective {} came back as {}", sol.objective, back.objective));
    }
    // raise the budget use of every period by running a closed line
    let mut corrupt = sol.values.clone();
    let row = model.row_by_tag("budget[1]").unwrap();
    let (v, _) = model.constraints[row].terms.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    for fs in model.freq.iter().flat_map(|per| per[0].iter()) {
        corrupt[*fs] = 0.0;
    }
    corrupt[*v] = 1.0;
    let text = mps::solution_text(&model, &inst, &corrupt);
    match mps::import_solution_str(&model, &inst, &text) {
        Err(lineplan::Error::ConstraintViolation { tag, .. }) => {
            Ok(format!("objective reproduced exactly, corrupted file rejected at row {tag}"))
        }
        other => Err(format!("corrupted solution was not rejected: {:?}", other.map(|s| s.objective))),
    }
}

fn criterion_9(solved: &[Solved]) -> Outcome {
    let mut multi = 0;
    for s in solved.iter().filter(|s| s.epsilon == 0).take(12) {
        let bound = per_period_bound(&s.instance, &SolveLimits::unlimited()).map_err(|e| e.to_string())?;
        if bound > s.solution.gjt * (1.0 + 1e-9) {
            return Err(format!("bound {bound} above gjt {}", s.solution.gjt));
        }
        multi += 1;
    }
    let mut single = 0;
    for seed in 0..6u64 {
        let inst = tiny_instance(&TinySpec { seed: 300 + seed, mode: Mode::Symmetric, routes: 2, periods: 1 });
        let s = solve_at(&inst, 0, false);
        if s.status != SolveStatus::Optimal {
            continue;
        }
        let bound = per_period_bound(&inst, &SolveLimits::unlimited()).map_err(|e| e.to_string())?;
        if rel_diff(bound, s.gjt) > 1e-6 {
            return Err(format!("single period: bound {bound}, gjt {}", s.gjt));
        }
        single += 1;
    }
    Ok(format!("bound below the optimum on {multi} fixtures, equal on {single} single-period fixtures"))
}

/// Frontier points by ascending adjustment count; the first half are those
/// with at most half of the largest realised count.
fn criterion_10() -> Outcome {
    if std::env::var_os("LINEPLAN_SKIP_SLOW").is_some() {
        return Err("skipped (LINEPLAN_SKIP_SLOW)".into());
    }
    let inst = load_instance(fixture("nl-south.inst")).map_err(|e| e.to_string())?;
    let epsilons = vec![0, 4, 8, 12, 16, 24, 32, 48];
    let total = 1800.0;
    let options = FrontierOptions {
        limits: SolveLimits::unlimited().with_gap(0.2).with_time(total / epsilons.len() as f64),
        epsilons: Some(epsilons),
        total_time: Some(total),
        threads: Some(1),
        ..Default::default()
    };
    let start = Instant::now();
    let set = pareto::run_frontier(&inst, &options).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    eprint!("{}", set.to_csv());
    let frontier = set.frontier();
    let largest = frontier.iter().filter_map(|p| p.total_adjustments()).max().unwrap_or(0);
    let (mut freq, mut stop) = (0, 0);
    for p in frontier.iter().filter(|p| p.total_adjustments().is_some_and(|c| c > 0 && 2 * c <= largest)) {
        let a = p.adjustments.unwrap();
        freq += a.frequency;
        stop += a.stop;
    }
    let summary = format!(
        "{} frontier points in {elapsed:.0} s, largest count {largest}; first half: {freq} frequency vs {stop} stop adjustments",
        frontier.len()
    );
    if elapsed > total + 120.0 {
        return Err(format!("over budget: {summary}"));
    }
    if freq > stop {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn main() -> std::process::ExitCode {
    let mut solved = Vec::new();
    let results: Vec<(u32, Outcome)> = vec![
        (1, criterion_1(&mut solved)),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4(&solved)),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9(&solved)),
        (10, criterion_10()),
    ];
    let mut failed = Vec::new();
    for (n, r) in &results {
        match r {
            Ok(msg) => println!("criterion {n:>2}: PASS  {msg}"),
            Err(msg) => {
                println!("criterion {n:>2}: FAIL  {msg}");
                failed.push(*n);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::ExitCode::FAILURE
    }
}

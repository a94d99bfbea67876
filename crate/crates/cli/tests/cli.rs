use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn lineplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lineplan")).args(args).output().expect("running lineplan")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn t1_text() -> String {
    fs::read_to_string(fixture("t1.inst")).unwrap()
}

#[test]
fn validate_accepts_fixture() {
    let o = lineplan(&["validate", s(&fixture("t1.inst"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("stations=5 lines=2 periods=2"));
}

#[test]
fn validate_rejects_route_ending_off_terminal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.inst");
    fs::write(&path, t1_text().replace(r#"route = ["H", "S00", "T0"]"#, r#"route = ["H", "S00"]"#)).unwrap();
    let o = lineplan(&["validate", s(&path)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("H-T0"), "{}", stderr(&o));
}

#[test]
fn validate_rejects_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.inst");
    fs::write(&path, "").unwrap();
    let o = lineplan(&["validate", s(&path)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_writes_summary_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = lineplan(&["solve", s(&fixture("t1.inst")), "--epsilon", "0", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("epsilon=0 total_adj=0 "), "{out}");
    for f in ["solution.sol", "plan.toml", "report.txt"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }

    let check = lineplan(&[
        "validate",
        s(&fixture("t1.inst")),
        "--epsilon",
        "0",
        "--solution",
        s(&dir.path().join("solution.sol")),
    ]);
    assert_eq!(check.status.code(), Some(0), "{}", stderr(&check));
    assert!(stdout(&check).contains("solution=ok"));

    let assign = lineplan(&[
        "assign",
        s(&fixture("t1.inst")),
        "--plan",
        s(&dir.path().join("plan.toml")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(assign.status.code(), Some(0), "{}", stderr(&assign));
    let od = fs::read_to_string(dir.path().join("od.csv")).unwrap();
    assert!(od.starts_with("period,origin,destination,demand,gjt_min\n"));
}

#[test]
fn export_mps_does_not_solve() {
    let dir = tempfile::tempdir().unwrap();
    let o = lineplan(&["solve", s(&fixture("t2.inst")), "--export-mps", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mps = fs::read_to_string(dir.path().join("model.mps")).unwrap();
    assert!(mps.starts_with("NAME"));
    assert!(mps.trim_end().ends_with("ENDATA"));
    assert!(!dir.path().join("solution.sol").exists());
}

#[test]
fn infeasible_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tight.inst");
    // the cheapest plan runs 2 * (10.9 + 18.8) * 2 = 118.8 train-km
    fs::write(&path, t1_text().replace("budget = 170.0", "budget = 100.0")).unwrap();
    let o = lineplan(&["solve", s(&path), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn frontier_single_limit() {
    let dir = tempfile::tempdir().unwrap();
    let o = lineplan(&["frontier", s(&fixture("t1.inst")), "--epsilon-list", "0", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("frontier.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], "epsilon,total_adj,freq_adj,stop_adj,gjt_min,gap,status");
    assert!(rows[1].starts_with("0,0,0,0,"));
    assert!(dir.path().join("plans/eps0000.toml").exists());
}

#[test]
fn frontier_is_deterministic_and_plans_revalidate() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let o = lineplan(&[
            "frontier",
            s(&fixture("t1.inst")),
            "--epsilon-list",
            "0,2,4",
            "--threads",
            "1",
            "--out",
            s(dir.path()),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        dir
    };
    let (a, b) = (run(), run());
    for f in ["frontier.csv", "pareto.csv", "heatmap.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
    for entry in fs::read_dir(a.path().join("plans")).unwrap() {
        let plan = entry.unwrap().path();
        let o = lineplan(&["assign", s(&fixture("t1.inst")), "--plan", s(&plan), "--out", s(a.path())]);
        assert_eq!(o.status.code(), Some(0), "{}: {}", plan.display(), stderr(&o));
    }
    let o = lineplan(&["report", s(&fixture("t1.inst")), "--plans", s(&a.path().join("plans")), "--out", s(a.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn solutions_round_trip_through_import() {
    let dir = tempfile::tempdir().unwrap();
    let o = lineplan(&["solve", s(&fixture("t1.inst")), "--epsilon", "2", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let solved = stdout(&o);
    let o = lineplan(&[
        "import-solution",
        s(&fixture("t1.inst")),
        "--epsilon",
        "2",
        "--solution",
        s(&dir.path().join("solution.sol")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let imported = stdout(&o);
    let field = |text: &str, key: &str| {
        text.split_whitespace().find_map(|kv| kv.strip_prefix(key)).map(str::to_string)
    };
    for key in ["total_adj=", "freq_adj=", "stop_adj=", "gjt_min="] {
        assert_eq!(field(&solved, key), field(&imported, key), "{key}");
    }
}

#[test]
fn synth_demand_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let o = lineplan(&["synth-demand", s(&fixture("t1.inst")), "--seed", seed, "--out", s(dir.path())]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(dir.path().join(format!("t1.seed{seed}.inst"))).unwrap()
    };
    let first = run("3");
    assert_eq!(first, run("3"));
    assert_ne!(first, run("4"));
}

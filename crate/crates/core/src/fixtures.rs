//! Small built-in instances for tests, examples and benchmarks.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::{
    mirror_lines, ArcCostTable, LineSpec, Mode, PeriodSpec, ProblemInstance, Section, Station,
};

/// The cost table of the case study, penalties included.
pub fn case_study_costs() -> ArcCostTable {
    let table = |v: [f64; 4]| -> BTreeMap<u32, f64> { [1, 2, 4, 6].into_iter().zip(v).collect() };
    ArcCostTable {
        in_cost: table([55.85, 31.85, 17.35, 10.85]),
        in_change_cost: table([50.25, 28.85, 19.95, 15.55]),
        out_cost: 0.70,
        out_change_cost: 0.70,
        stop_cost: 3.55,
        skip_cost: 0.0,
    }
}

fn station(id: &str, terminal: bool, transfer: bool) -> Station {
    Station { id: id.into(), name: id.into(), is_terminal: terminal, is_transfer: transfer }
}

fn section(a: &str, b: &str, minutes: f64, km: f64) -> Section {
    Section { from: a.into(), to: b.into(), minutes, km }
}

/// Three transfer stations `Aa`, `Bb`, `Cc` served by one line `Aa-Cc` with
/// frequencies 1 and 2, one period with 5 passengers per hour `Aa`→`Cc`.
///
/// With `Mode::Asymmetric` the single line is kept one-way, which is the
/// layout used to illustrate the asymmetric graph; such an instance is meant
/// for graph construction only and does not pass [`ProblemInstance::validate`].
pub fn figure_instance(mode: Mode) -> ProblemInstance {
    let mut inst = ProblemInstance::new(
        vec![station("Aa", true, true), station("Bb", false, true), station("Cc", true, true)],
        vec![section("Aa", "Bb", 6.0, 8.0), section("Bb", "Cc", 7.0, 9.0)],
        vec![LineSpec {
            id: "Aa-Cc".into(),
            route: vec!["Aa".into(), "Bb".into(), "Cc".into()],
            frequencies: vec![1, 2],
            capacity: 100,
            length_km: None,
        }],
        vec![PeriodSpec {
            name: None,
            length_hours: 1.0,
            budget: 1000.0,
            demand: vec![("Aa".into(), "Cc".into(), 5.0)],
        }],
        case_study_costs(),
        Mode::Symmetric,
        crate::instance::DEFAULT_DELTA,
    )
    .expect("figure instance is valid");
    inst.mode = mode;
    inst
}

/// Parameters for [`tiny_instance`].
#[derive(Clone, Debug)]
pub struct TinySpec {
    pub seed: u64,
    pub mode: Mode,
    pub routes: usize,
    pub periods: usize,
}

/// Random small instance: up to two routes sharing a transfer terminal, at
/// most two intermediate stations per route, two frequencies per line.
/// Budgets and capacities are drawn so that some but not all configurations
/// are feasible.
pub fn tiny_instance(spec: &TinySpec) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut stations = vec![station("H", true, true)];
    let mut sections = Vec::new();
    let mut lines = Vec::new();
    let mut names = Vec::new();
    let freq_sets = [[1u32, 2], [2, 4], [1, 4], [4, 6], [2, 6]];
    for r in 0..spec.routes.clamp(1, 2) {
        let inter = rng.random_range(1..=2usize);
        let mut route = vec!["H".to_string()];
        let mut prev = "H".to_string();
        for k in 0..=inter {
            let last = k == inter;
            let id = if last { format!("T{r}") } else { format!("S{r}{k}") };
            // intermediate stations are sometimes transfer points
            let transfer = last || rng.random_bool(0.3);
            stations.push(station(&id, last, transfer));
            let minutes = (rng.random_range(3.0..12.0f64) * 10.0).round() / 10.0;
            let km = (minutes * 1.3 * 10.0).round() / 10.0;
            sections.push(section(&prev, &id, minutes, km));
            route.push(id.clone());
            prev = id;
        }
        names.extend(route.iter().cloned());
        let freqs = freq_sets[rng.random_range(0..freq_sets.len())].to_vec();
        lines.push(LineSpec {
            id: format!("H-T{r}"),
            route,
            frequencies: freqs,
            capacity: rng.random_range(100..=300u32),
            length_km: None,
        });
    }
    names.sort();
    names.dedup();

    // train-km per hour of running every line at its lowest and highest
    // frequency, counted in both directions
    let km = |pick: fn(&[u32]) -> u32| -> f64 {
        let len = |l: &LineSpec| l.route.windows(2).map(|w| sections.iter().find(|s| s.to == w[1]).map_or(0.0, |s| s.km)).sum::<f64>();
        lines.iter().map(|l| 2.0 * len(l) * pick(&l.frequencies) as f64).sum()
    };
    let (km_low, km_high) = (km(|f| f[0]), km(|f| f[f.len() - 1]));
    let mut periods = Vec::new();
    for p in 0..spec.periods.max(1) {
        let mut demand = Vec::new();
        for o in &names {
            for d in &names {
                if o != d && rng.random_bool(0.6) {
                    let v = (rng.random_range(1.0..40.0f64) * 10.0).round() / 10.0;
                    demand.push((o.clone(), d.clone(), v));
                }
            }
        }
        let budget = (km_low + (km_high - km_low) * rng.random_range(0.0..1.1f64)).round();
        periods.push(PeriodSpec {
            name: Some(format!("P{}", p + 1)),
            length_hours: [1.5, 5.5, 1.5, 2.0][p % 4],
            budget,
            demand,
        });
    }
    let base = ProblemInstance::new(
        stations,
        sections,
        lines,
        periods,
        case_study_costs(),
        Mode::Symmetric,
        crate::instance::DEFAULT_DELTA,
    )
    .expect("tiny instance is valid");
    match spec.mode {
        Mode::Symmetric => base,
        Mode::Asymmetric => mirror_lines(&base).expect("tiny instance mirrors"),
    }
}

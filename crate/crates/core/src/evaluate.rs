//! Evaluation of fixed line plans: passenger assignment, a shortest-path
//! oracle for the uncapacitated case, exhaustive search over all plans of
//! tiny instances, plan diffs and report tables.

use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cng::{build_graph, node_demand, ArcKind, CngArc, CngGraph, NodeKind};
use crate::instance::{Mode, ProblemInstance};
use crate::milp::{build_model, FlowLayout, MilpModel, ModelOptions};
use crate::solve::solve_fixed_binaries;
use crate::{Error, Result};

/// Flows below this are treated as zero when decomposing into paths.
const FLOW_EPS: f64 = 1e-9;

/// Configuration count above which [`brute_force`] refuses to run.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Frequencies and stopping patterns of every line in every period.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinePlan {
    /// `frequency[period][line]`, 0 when the line does not run.
    pub frequency: Vec<Vec<u32>>,
    /// `stops[period][line][position]`; terminals are always `true`.
    pub stops: Vec<Vec<Vec<bool>>>,
}

impl LinePlan {
    /// Every line at the given frequency in every period, calling everywhere.
    pub fn uniform(instance: &ProblemInstance, frequency: impl Fn(usize) -> u32) -> LinePlan {
        let np = instance.periods.len();
        LinePlan {
            frequency: vec![(0..instance.lines.len()).map(&frequency).collect(); np],
            stops: vec![instance.lines.iter().map(|l| vec![true; l.route.len()]).collect(); np],
        }
    }

    /// Reads the binaries of a model solution (rounded).
    pub fn from_values(model: &MilpModel, instance: &ProblemInstance, values: &[f64]) -> LinePlan {
        let np = instance.periods.len();
        let mut plan = LinePlan::uniform(instance, |_| 0);
        for p in 0..np {
            for (l, line) in instance.lines.iter().enumerate() {
                for (fi, v) in model.freq[l][p].iter().enumerate() {
                    if values[*v] > 0.5 {
                        plan.frequency[p][l] = line.frequencies[fi];
                    }
                }
                for (j, v) in model.stop[l][p].iter().enumerate() {
                    if let Some(v) = v {
                        plan.stops[p][l][j] = values[*v] > 0.5;
                    }
                }
            }
        }
        plan
    }

    /// A value vector for `model` with the plan's binaries set and every
    /// other variable zero.
    pub fn to_values(&self, model: &MilpModel, instance: &ProblemInstance) -> Vec<f64> {
        let mut values = vec![0.0; model.num_vars()];
        for (p, freqs) in self.frequency.iter().enumerate() {
            for (l, f) in freqs.iter().enumerate() {
                if let Some(fi) = instance.lines[l].frequencies.iter().position(|x| x == f) {
                    values[model.freq[l][p][fi]] = 1.0;
                }
                for (j, v) in model.stop[l][p].iter().enumerate() {
                    if let Some(v) = v {
                        values[*v] = if self.stops[p][l][j] { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        values
    }

    pub fn num_periods(&self) -> usize {
        self.frequency.len()
    }

    /// Left-hand side of the budget row of period `p`.
    pub fn budget_used(&self, instance: &ProblemInstance, p: usize) -> f64 {
        let sigma = instance.sigma();
        instance
            .lines
            .iter()
            .zip(&self.frequency[p])
            .map(|(line, f)| sigma * line.length_km * *f as f64)
            .sum()
    }

    /// Frequency and stop adjustments between consecutive periods, each
    /// counted `sigma` times.
    pub fn change_counts(&self, instance: &ProblemInstance) -> (u32, u32) {
        let sigma = instance.sigma() as u32;
        let (mut freq, mut stop) = (0, 0);
        for p in 1..self.num_periods() {
            for (l, line) in instance.lines.iter().enumerate() {
                if self.frequency[p][l] != self.frequency[p - 1][l] {
                    freq += sigma;
                }
                for j in line.intermediate_positions() {
                    if self.stops[p][l][j] != self.stops[p - 1][l][j] {
                        stop += sigma;
                    }
                }
            }
        }
        (freq, stop)
    }

    pub fn total_changes(&self, instance: &ProblemInstance) -> u32 {
        let (f, s) = self.change_counts(instance);
        f + s
    }

    /// Allowed frequencies, budgets and (in asymmetric mode) terminal balance.
    pub fn check(&self, instance: &ProblemInstance) -> Result<()> {
        if self.num_periods() != instance.periods.len() {
            return Err(Error::InfeasiblePlan(format!(
                "plan has {} periods, instance {}",
                self.num_periods(),
                instance.periods.len()
            )));
        }
        for (p, period) in instance.periods.iter().enumerate() {
            if self.frequency[p].len() != instance.lines.len() || self.stops[p].len() != instance.lines.len() {
                return Err(Error::InfeasiblePlan(format!("period {} does not cover every line", p + 1)));
            }
            for (l, line) in instance.lines.iter().enumerate() {
                let f = self.frequency[p][l];
                if f != 0 && !line.frequencies.contains(&f) {
                    return Err(Error::InfeasiblePlan(format!(
                        "line {} runs at {f}, not an allowed frequency",
                        line.id
                    )));
                }
                let s = &self.stops[p][l];
                if s.len() != line.route.len() || !s[0] || !s[s.len() - 1] {
                    return Err(Error::InfeasiblePlan(format!("stop pattern of line {} is malformed", line.id)));
                }
            }
            let used = self.budget_used(instance, p);
            if used > period.budget + 1e-9 * period.budget.abs().max(1.0) {
                return Err(Error::InfeasiblePlan(format!(
                    "period {} uses {used} train-km, budget {}",
                    p + 1,
                    period.budget
                )));
            }
        }
        if instance.mode == Mode::Asymmetric && self.num_periods() > 1 {
            for s in 0..instance.num_stations() {
                let mut balance = 0.0;
                for (p, period) in instance.periods.iter().enumerate() {
                    for l in instance.lines_leaving(s) {
                        balance += period.length_hours * self.frequency[p][l] as f64;
                    }
                    for l in instance.lines_entering(s) {
                        balance -= period.length_hours * self.frequency[p][l] as f64;
                    }
                }
                if balance.abs() > 1e-9 {
                    return Err(Error::InfeasiblePlan(format!(
                        "trains into and out of {} do not balance",
                        instance.stations[s].id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether `arc` can carry passengers under the plan in period `p`.
    pub fn arc_active(&self, arc: &CngArc, p: usize) -> bool {
        let f = self.frequency[p][arc.line];
        if f == 0 {
            return false;
        }
        let calls = self.stops[p][arc.line][arc.position];
        match arc.kind {
            ArcKind::Drive => true,
            ArcKind::Skip => !calls,
            ArcKind::Stop => calls,
            ArcKind::In | ArcKind::ChIn => calls && arc.frequency == Some(f),
            ArcKind::Out | ArcKind::ChOut => calls,
        }
    }

    pub fn to_toml_string(&self, instance: &ProblemInstance) -> String {
        let raw = RawPlan {
            periods: instance
                .periods
                .iter()
                .enumerate()
                .map(|(p, period)| RawPlanPeriod {
                    name: period.name.clone(),
                    frequency: instance
                        .lines
                        .iter()
                        .enumerate()
                        .map(|(l, line)| (line.id.clone(), self.frequency[p][l]))
                        .collect(),
                    skip: instance
                        .lines
                        .iter()
                        .enumerate()
                        .filter_map(|(l, line)| {
                            let skipped: Vec<String> = line
                                .intermediate_positions()
                                .filter(|j| !self.stops[p][l][*j])
                                .map(|j| instance.stations[line.route[j]].id.clone())
                                .collect();
                            (!skipped.is_empty()).then(|| (line.id.clone(), skipped))
                        })
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("plan serialization cannot fail")
    }

    pub fn from_toml_str(instance: &ProblemInstance, text: &str) -> Result<LinePlan> {
        let raw: RawPlan = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if raw.periods.len() != instance.periods.len() {
            return Err(Error::Parse(format!(
                "plan has {} periods, instance {}",
                raw.periods.len(),
                instance.periods.len()
            )));
        }
        let mut plan = LinePlan::uniform(instance, |_| 0);
        for (p, rp) in raw.periods.iter().enumerate() {
            for (id, f) in &rp.frequency {
                let l = instance.line_index(id).ok_or_else(|| Error::Parse(format!("plan names unknown line `{id}`")))?;
                plan.frequency[p][l] = *f;
            }
            for (id, skipped) in &rp.skip {
                let l = instance.line_index(id).ok_or_else(|| Error::Parse(format!("plan names unknown line `{id}`")))?;
                let line = &instance.lines[l];
                for st in skipped {
                    let j = line
                        .intermediate_positions()
                        .find(|j| instance.stations[line.route[*j]].id == *st)
                        .ok_or_else(|| {
                            Error::Parse(format!("`{st}` is not an intermediate station of line {id}"))
                        })?;
                    plan.stops[p][l][j] = false;
                }
            }
        }
        Ok(plan)
    }

    pub fn save(&self, instance: &ProblemInstance, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string(instance)).map_err(|e| Error::io(path, e))
    }

    pub fn load(instance: &ProblemInstance, path: &Path) -> Result<LinePlan> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LinePlan::from_toml_str(instance, &text)
    }
}

#[derive(Serialize, Deserialize)]
struct RawPlan {
    periods: Vec<RawPlanPeriod>,
}

#[derive(Serialize, Deserialize)]
struct RawPlanPeriod {
    #[serde(default)]
    name: String,
    #[serde(default)]
    frequency: BTreeMap<String, u32>,
    /// Intermediate stations skipped, per line.
    #[serde(default)]
    skip: BTreeMap<String, Vec<String>>,
}

/// Travel cost of one origin-destination pair in one period.
#[derive(Clone, Debug, PartialEq)]
pub struct OdCost {
    pub period: usize,
    pub origin: usize,
    pub destination: usize,
    /// Passengers per hour.
    pub demand: f64,
    /// Average generalised journey time per passenger, minutes.
    pub minutes: f64,
}

#[derive(Clone, Debug)]
pub struct AssignmentResult {
    /// Flow per model flow column, laid out as in `layout`.
    pub flows: Vec<f64>,
    pub layout: FlowLayout,
    /// Generalised journey time, passenger-minutes weighted by period length.
    pub gjt: f64,
    pub od: Vec<OdCost>,
    /// Largest drive-arc load over seat capacity `capacity * frequency`.
    pub max_load_factor: f64,
}

impl AssignmentResult {
    pub fn flow(&self, arc: usize, origin: usize, period: usize) -> f64 {
        self.flows[self.layout.var(arc, origin, period) - self.layout.start]
    }

    /// CSV with header `period,origin,destination,demand,gjt_min`.
    pub fn od_csv(&self, instance: &ProblemInstance) -> String {
        let mut out = String::from("period,origin,destination,demand,gjt_min\n");
        for c in &self.od {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                c.period + 1,
                instance.stations[c.origin].id,
                instance.stations[c.destination].id,
                c.demand,
                c.minutes
            );
        }
        out
    }
}

/// Model without adjustment rows, used to route passengers under fixed plans.
fn assignment_model(graph: &CngGraph, instance: &ProblemInstance) -> MilpModel {
    build_model(graph, instance, &ModelOptions { epsilon: 0, multi_period: false, pair_directions: false })
}

/// Finds the first origin and period whose demand cannot reach all of its
/// destinations over the plan's active arcs.
fn unroutable(instance: &ProblemInstance, graph: &CngGraph, plan: &LinePlan) -> Option<(usize, usize)> {
    for (p, period) in instance.periods.iter().enumerate() {
        for o in 0..instance.num_stations() {
            if period.demand.row_total(o) <= 0.0 {
                continue;
            }
            let mut seen = vec![false; graph.num_nodes()];
            let mut stack = vec![graph.in_node(o)];
            seen[graph.in_node(o)] = true;
            while let Some(v) = stack.pop() {
                for &a in graph.outgoing(v) {
                    let arc = &graph.arcs[a];
                    if !seen[arc.head] && plan.arc_active(arc, p) {
                        seen[arc.head] = true;
                        stack.push(arc.head);
                    }
                }
            }
            let blocked = (0..instance.num_stations())
                .any(|d| period.demand.get(o, d) > 0.0 && !seen[graph.out_node(d)]);
            if blocked {
                return Some((o, p));
            }
        }
    }
    None
}

/// Routes all demand over the plan at minimum generalised journey time,
/// respecting drive-arc capacities.
pub fn assign(instance: &ProblemInstance, graph: &CngGraph, plan: &LinePlan) -> Result<AssignmentResult> {
    plan.check(instance)?;
    let model = assignment_model(graph, instance);
    assign_with(instance, graph, &model, plan)
}

fn assign_with(
    instance: &ProblemInstance,
    graph: &CngGraph,
    model: &MilpModel,
    plan: &LinePlan,
) -> Result<AssignmentResult> {
    if let Some((o, p)) = unroutable(instance, graph, plan) {
        return Err(Error::Unroutable { origin: instance.stations[o].id.clone(), period: p + 1 });
    }
    let values = plan.to_values(model, instance);
    let Some(values) = solve_fixed_binaries(model, &values, None)? else {
        return Err(Error::InfeasiblePlan("demand exceeds the plan's seat capacity".into()));
    };
    let layout = model.flows.clone();
    let flows = values[layout.start..layout.start + layout.len()].to_vec();
    let gjt = model.gjt(&values);
    let mut result = AssignmentResult { flows, layout, gjt, od: Vec::new(), max_load_factor: 0.0 };
    result.od = od_costs(instance, graph, &result);
    result.max_load_factor = max_load_factor(instance, graph, plan, &result);
    Ok(result)
}

fn max_load_factor(instance: &ProblemInstance, graph: &CngGraph, plan: &LinePlan, r: &AssignmentResult) -> f64 {
    let mut worst: f64 = 0.0;
    for &a in graph.arcs_of_kind(ArcKind::Drive) {
        let arc = &graph.arcs[a];
        for p in 0..instance.periods.len() {
            let f = plan.frequency[p][arc.line];
            if f == 0 {
                continue;
            }
            let load: f64 = (0..instance.num_stations()).map(|o| r.flow(a, o, p)).sum();
            worst = worst.max(load / (instance.lines[arc.line].capacity as f64 * f as f64));
        }
    }
    worst
}

/// Splits each origin's flow into paths and averages their cost per
/// destination.
fn od_costs(instance: &ProblemInstance, graph: &CngGraph, r: &AssignmentResult) -> Vec<OdCost> {
    let mut out = Vec::new();
    for (p, period) in instance.periods.iter().enumerate() {
        for o in 0..instance.num_stations() {
            if period.demand.row_total(o) <= 0.0 {
                continue;
            }
            let mut residual: Vec<f64> = (0..graph.num_arcs()).map(|a| r.flow(a, o, p).max(0.0)).collect();
            let mut cost_sum = vec![0.0; instance.num_stations()];
            let mut carried = vec![0.0; instance.num_stations()];
            let source = graph.in_node(o);
            loop {
                // walk forward along positive flow until a sink is reached
                let mut path: Vec<usize> = Vec::new();
                let mut on_path = vec![usize::MAX; graph.num_nodes()];
                let mut v = source;
                on_path[v] = 0;
                let mut stuck = false;
                while graph.nodes[v].kind != NodeKind::Out {
                    let Some(&a) = graph.outgoing(v).iter().find(|a| residual[**a] > FLOW_EPS) else {
                        stuck = true;
                        break;
                    };
                    path.push(a);
                    v = graph.arcs[a].head;
                    if on_path[v] != usize::MAX {
                        // cancel the cycle and restart
                        let cycle = &path[on_path[v]..];
                        let m = cycle.iter().map(|a| residual[*a]).fold(f64::INFINITY, f64::min);
                        for a in cycle {
                            residual[*a] -= m;
                        }
                        break;
                    }
                    on_path[v] = path.len();
                }
                if stuck {
                    break;
                }
                if graph.nodes[v].kind != NodeKind::Out {
                    continue;
                }
                let m = path.iter().map(|a| residual[*a]).fold(f64::INFINITY, f64::min);
                let c: f64 = path.iter().map(|a| graph.arcs[*a].cost).sum();
                for a in &path {
                    residual[*a] -= m;
                }
                let d = graph.nodes[v].station;
                cost_sum[d] += m * c;
                carried[d] += m;
            }
            for d in 0..instance.num_stations() {
                let demand = period.demand.get(o, d);
                if demand > 0.0 {
                    let minutes = if carried[d] > 0.0 { cost_sum[d] / carried[d] } else { f64::NAN };
                    out.push(OdCost { period: p, origin: o, destination: d, demand, minutes });
                }
            }
        }
    }
    out
}

/// Generalised journey time when every passenger takes a shortest path over
/// the plan's active arcs, ignoring capacities.
pub fn shortest_path_gjt(instance: &ProblemInstance, graph: &CngGraph, plan: &LinePlan) -> Result<f64> {
    let mut total = 0.0;
    for (p, period) in instance.periods.iter().enumerate() {
        for o in 0..instance.num_stations() {
            if period.demand.row_total(o) <= 0.0 {
                continue;
            }
            let dist = dijkstra(graph, graph.in_node(o), |a| plan.arc_active(a, p));
            for d in 0..instance.num_stations() {
                let demand = period.demand.get(o, d);
                if demand <= 0.0 {
                    continue;
                }
                let t = dist[graph.out_node(d)];
                if !t.is_finite() {
                    return Err(Error::Unroutable { origin: instance.stations[o].id.clone(), period: p + 1 });
                }
                total += period.length_hours * demand * t;
            }
        }
    }
    Ok(total)
}

#[derive(PartialEq)]
struct Label(f64, usize);

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

fn dijkstra(graph: &CngGraph, source: usize, active: impl Fn(&CngArc) -> bool) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.num_nodes()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Label(0.0, source));
    while let Some(Label(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &a in graph.outgoing(v) {
            let arc = &graph.arcs[a];
            if !active(arc) {
                continue;
            }
            let nd = d + arc.cost;
            if nd < dist[arc.head] {
                dist[arc.head] = nd;
                heap.push(Label(nd, arc.head));
            }
        }
    }
    dist
}

/// Configurations of one period: per line a frequency (0 = off) and a stop
/// pattern, in lexicographic order.
fn period_configs(instance: &ProblemInstance) -> Vec<(Vec<u32>, Vec<Vec<bool>>)> {
    let mut configs: Vec<(Vec<u32>, Vec<Vec<bool>>)> = vec![(Vec::new(), Vec::new())];
    for line in &instance.lines {
        let k = line.num_intermediate();
        let options: Vec<u32> = std::iter::once(0).chain(line.frequencies.iter().copied()).collect();
        let mut next = Vec::with_capacity(configs.len() * options.len() << k);
        for (fs, ss) in &configs {
            for f in &options {
                for mask in 0..(1u32 << k) {
                    let mut stops = vec![true; line.route.len()];
                    for (bit, j) in line.intermediate_positions().enumerate() {
                        // skipped stations come first in the order
                        stops[j] = mask & (1 << (k - 1 - bit)) != 0;
                    }
                    let mut fs = fs.clone();
                    fs.push(*f);
                    let mut ss = ss.clone();
                    ss.push(stops);
                    next.push((fs, ss));
                }
            }
        }
        configs = next;
    }
    configs
}

/// Number of plans [`brute_force`] would enumerate.
pub fn configuration_count(instance: &ProblemInstance) -> f64 {
    let per_period: f64 = instance
        .lines
        .iter()
        .map(|l| (l.frequencies.len() + 1) as f64 * 2f64.powi(l.num_intermediate() as i32))
        .product();
    per_period.powi(instance.periods.len() as i32)
}

/// Best plan by exhaustive enumeration: minimum generalised journey time,
/// then fewest adjustments, then the lexicographically smallest plan.
/// `None` when no plan is feasible.
pub fn brute_force(instance: &ProblemInstance, epsilon: u32) -> Result<Option<(LinePlan, f64)>> {
    let count = configuration_count(instance);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::GuardExceeded { count, limit: BRUTE_FORCE_LIMIT });
    }
    let configs = period_configs(instance);
    let np = instance.periods.len();

    // gjt of every configuration in every period, None when infeasible
    let mut table: Vec<Vec<Option<f64>>> = Vec::with_capacity(np);
    for p in 0..np {
        let mut single = instance.clone();
        let mut period = instance.periods[p].clone();
        period.index = 1;
        single.periods = vec![period];
        let graph = build_graph(&single)?;
        let model = assignment_model(&graph, &single);
        let row: Result<Vec<Option<f64>>> = configs
            .par_iter()
            .map(|(fs, ss)| {
                let plan = LinePlan { frequency: vec![fs.clone()], stops: vec![ss.clone()] };
                if plan.budget_used(&single, 0) > single.periods[0].budget + 1e-9 * single.periods[0].budget.max(1.0) {
                    return Ok(None);
                }
                match assign_with(&single, &graph, &model, &plan) {
                    Ok(r) => Ok(Some(r.gjt)),
                    Err(Error::Unroutable { .. } | Error::InfeasiblePlan(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect();
        table.push(row?);
    }

    let feasible: Vec<Vec<usize>> =
        table.iter().map(|row| (0..row.len()).filter(|c| row[*c].is_some()).collect()).collect();
    let mut best: Option<(f64, u32, Vec<usize>)> = None;
    let mut pick = vec![0usize; np];
    enumerate(&feasible, 0, &mut pick, &mut |choice| {
        let plan = LinePlan {
            frequency: choice.iter().map(|c| configs[*c].0.clone()).collect(),
            stops: choice.iter().map(|c| configs[*c].1.clone()).collect(),
        };
        let changes = plan.total_changes(instance);
        if changes > epsilon {
            return;
        }
        if instance.mode == Mode::Asymmetric && np > 1 && plan.check(instance).is_err() {
            return;
        }
        let gjt: f64 = choice.iter().enumerate().map(|(p, c)| table[p][*c].unwrap()).sum();
        let better = match &best {
            None => true,
            Some((bg, bc, _)) => {
                let tol = 1e-9 * bg.abs().max(1.0);
                gjt < bg - tol || (gjt <= bg + tol && changes < *bc)
            }
        };
        // candidates arrive in lexicographic order, so ties keep the first
        if better {
            best = Some((gjt, changes, choice.to_vec()));
        }
    });
    Ok(best.map(|(gjt, _, choice)| {
        let plan = LinePlan {
            frequency: choice.iter().map(|c| configs[*c].0.clone()).collect(),
            stops: choice.iter().map(|c| configs[*c].1.clone()).collect(),
        };
        (plan, gjt)
    }))
}

fn enumerate(feasible: &[Vec<usize>], p: usize, pick: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if p == feasible.len() {
        visit(pick);
        return;
    }
    for &c in &feasible[p] {
        pick[p] = c;
        enumerate(feasible, p + 1, pick, visit);
    }
}

/// One adjustment between period `period - 1` and `period` (0-based).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlanChange {
    Frequency { line: usize, period: usize, from: u32, to: u32 },
    Stop { line: usize, station: usize, period: usize, from: bool, to: bool },
}

/// Every frequency switch and stop toggle between consecutive periods.
pub fn diff_plans(plan: &LinePlan, instance: &ProblemInstance) -> Vec<PlanChange> {
    let mut out = Vec::new();
    for p in 1..plan.num_periods() {
        for (l, line) in instance.lines.iter().enumerate() {
            let (a, b) = (plan.frequency[p - 1][l], plan.frequency[p][l]);
            if a != b {
                out.push(PlanChange::Frequency { line: l, period: p, from: a, to: b });
            }
            for j in line.intermediate_positions() {
                let (a, b) = (plan.stops[p - 1][l][j], plan.stops[p][l][j]);
                if a != b {
                    out.push(PlanChange::Stop { line: l, station: line.route[j], period: p, from: a, to: b });
                }
            }
        }
    }
    out
}

/// Change counts per (line, station, transition, kind) over many plans.
/// Frequency cells use `None` for the station.
pub fn heatmap(plans: &[LinePlan], instance: &ProblemInstance) -> BTreeMap<(usize, Option<usize>, usize, &'static str), u32> {
    let mut cells = BTreeMap::new();
    for plan in plans {
        for c in diff_plans(plan, instance) {
            let key = match c {
                PlanChange::Frequency { line, period, .. } => (line, None, period, "frequency"),
                PlanChange::Stop { line, station, period, .. } => (line, Some(station), period, "stop"),
            };
            *cells.entry(key).or_insert(0) += 1;
        }
    }
    cells
}

/// CSV with header `line,station,period_transition,kind,count`.
pub fn heatmap_csv(plans: &[LinePlan], instance: &ProblemInstance) -> String {
    let mut out = String::from("line,station,period_transition,kind,count\n");
    for ((l, s, p, kind), n) in heatmap(plans, instance) {
        let station = s.map_or("", |s| instance.stations[s].id.as_str());
        let _ = writeln!(out, "{},{},{}-{},{},{}", instance.lines[l].id, station, p, p + 1, kind, n);
    }
    out
}

/// Percentage change in demand (and revenue) for a percentage change in
/// generalised journey time.
pub fn revenue_impact(gjt_change_pct: f64, elasticity: f64) -> f64 {
    gjt_change_pct * elasticity
}

/// Independent recomputation of a model solution's accounting.
#[derive(Clone, Debug)]
pub struct SolutionAudit {
    pub plan: LinePlan,
    /// Largest flow-conservation residual over all nodes, origins and periods.
    pub max_residual: f64,
    /// Budget row left-hand side per period.
    pub budget_used: Vec<f64>,
    pub freq_changes: u32,
    pub stop_changes: u32,
    pub slack: f64,
}

/// Re-derives the plan, flow conservation, budget use and adjustment counts
/// from the graph and instance, without using the model's rows, and fails
/// when they disagree with the solution.
pub fn audit_solution(
    instance: &ProblemInstance,
    graph: &CngGraph,
    model: &MilpModel,
    values: &[f64],
) -> Result<SolutionAudit> {
    let plan = LinePlan::from_values(model, instance, values);
    plan.check(instance)?;
    let fl = &model.flows;
    let mut max_residual: f64 = 0.0;
    for (p, period) in instance.periods.iter().enumerate() {
        for o in 0..instance.num_stations() {
            let mut net = vec![0.0; graph.num_nodes()];
            for arc in &graph.arcs {
                let x = values[fl.var(arc.id, o, p)];
                if x < -1e-6 {
                    return Err(Error::InfeasiblePlan(format!("negative flow on arc {}", arc.id)));
                }
                if x > 1e-9 && !plan.arc_active(arc, p) {
                    return Err(Error::InfeasiblePlan(format!(
                        "flow {x} on arc {} which the plan does not run in period {}",
                        arc.id,
                        p + 1
                    )));
                }
                net[arc.head] += x;
                net[arc.tail] -= x;
            }
            for (v, n) in net.iter().enumerate() {
                max_residual = max_residual.max((n - node_demand(graph, o, period, v)).abs());
            }
        }
        for &a in graph.arcs_of_kind(ArcKind::Drive) {
            let arc = &graph.arcs[a];
            let load: f64 = (0..instance.num_stations()).map(|o| values[fl.var(a, o, p)]).sum();
            let cap = instance.lines[arc.line].capacity as f64 * plan.frequency[p][arc.line] as f64;
            if load > cap + 1e-6 {
                return Err(Error::InfeasiblePlan(format!("drive arc {a} carries {load} over capacity {cap}")));
            }
        }
    }
    let budget_used = (0..instance.periods.len()).map(|p| plan.budget_used(instance, p)).collect();
    let (freq_changes, stop_changes) = plan.change_counts(instance);
    let slack = model.slack.map_or(0.0, |s| values[s]);
    Ok(SolutionAudit { plan, max_residual, budget_used, freq_changes, stop_changes, slack })
}

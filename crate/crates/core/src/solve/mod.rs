//! LP-based branch-and-bound for [`MilpModel`]s.
//!
//! The model is presolved once, the root relaxation is solved with the
//! `microlp` simplex engine, and nodes re-use the optimal basis through
//! warm-started variable fixings. Node selection is best-bound with depth
//! first plunging: after branching, the child that rounds the branching
//! variable to its nearest value is processed immediately and its sibling is
//! queued. Branching picks the most fractional binary, frequency variables
//! before stop variables, then the lowest index.

pub mod mps;
pub mod presolve;

mod lp;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::cng::build_graph;
use crate::instance::ProblemInstance;
use crate::milp::{build_model, MilpModel, ModelOptions, VarKind};
use crate::{Error, Result};

use lp::{Lp, Outcome};
use presolve::{presolve, presolve_with, Reduced};

/// Distance from an integer below which a binary counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveLimits {
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    /// Relative gap at which the search stops and reports optimality.
    pub gap_limit: Option<f64>,
    pub node_limit: Option<u64>,
}

impl SolveLimits {
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn with_time(mut self, seconds: f64) -> Self {
        self.time_limit = Some(seconds);
        self
    }

    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap_limit = Some(gap);
        self
    }

    pub fn with_nodes(mut self, nodes: u64) -> Self {
        self.node_limit = Some(nodes);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    FeasibleAtLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleAtLimit => "feasible-at-limit",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// One value per model variable; empty when infeasible.
    pub values: Vec<f64>,
    /// Generalised journey time minus the slack reward.
    pub objective: f64,
    /// Generalised journey time in passenger-minutes.
    pub gjt: f64,
    /// Best proven lower bound on the objective.
    pub bound: f64,
    /// `(objective - bound) / objective`.
    pub gap: f64,
    pub status: SolveStatus,
    /// Seconds.
    pub wall_time: f64,
    pub nodes: u64,
}

impl Solution {
    fn infeasible(start: Instant, nodes: u64) -> Solution {
        Solution {
            values: Vec::new(),
            objective: f64::INFINITY,
            gjt: f64::INFINITY,
            bound: f64::INFINITY,
            gap: 0.0,
            status: SolveStatus::Infeasible,
            wall_time: start.elapsed().as_secs_f64(),
            nodes,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status != SolveStatus::Infeasible
    }
}

pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    if objective == bound {
        return 0.0;
    }
    ((objective - bound) / objective.abs().max(1e-9)).max(0.0)
}

/// Solves `model` to optimality or until a limit is hit.
pub fn solve(model: &MilpModel, limits: &SolveLimits) -> Result<Solution> {
    solve_with(model, limits, None)
}

/// Like [`solve`], seeding the incumbent with the binaries of `warm_start`
/// when they are feasible for `model`.
pub fn solve_with(model: &MilpModel, limits: &SolveLimits, warm_start: Option<&[f64]>) -> Result<Solution> {
    let start = Instant::now();
    let deadline = limits.time_limit.map(|t| start + Duration::from_secs_f64(t.max(0.0)));
    let lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    let Ok(reduced) = presolve(model, &lower, &upper) else {
        return Ok(Solution::infeasible(start, 0));
    };
    let mut search = Search::new(model, reduced, limits, deadline);
    if let Some(ws) = warm_start {
        if ws.len() == model.num_vars() {
            if let Some(values) = solve_fixed_binaries(model, ws, deadline)? {
                search.offer(values);
            }
        }
    }
    search.run(start)
}

/// Solves the LP relaxation (binaries relaxed to `[0, 1]`).
pub fn lp_relax(model: &MilpModel) -> Result<Solution> {
    let start = Instant::now();
    let lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    let values = match solve_lp(model, &lower, &upper, None)? {
        Some(Outcome::Solved(values)) => values,
        Some(Outcome::Infeasible) | None => return Ok(Solution::infeasible(start, 0)),
        Some(Outcome::Limit) => return Err(Error::LimitWithoutIncumbent),
    };
    let objective = model.objective(&values);
    Ok(Solution {
        gjt: model.gjt(&values),
        values,
        objective,
        bound: objective,
        gap: 0.0,
        status: SolveStatus::Optimal,
        wall_time: start.elapsed().as_secs_f64(),
        nodes: 0,
    })
}

/// Fixes every binary of `model` to the rounded value found in `binaries`
/// and solves the remaining LP. Returns `None` when that plan is infeasible.
pub fn solve_fixed_binaries(
    model: &MilpModel,
    binaries: &[f64],
    deadline: Option<Instant>,
) -> Result<Option<Vec<f64>>> {
    let mut lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let mut upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    for v in model.binaries() {
        let x = binaries[v].round().clamp(0.0, 1.0);
        lower[v] = x;
        upper[v] = x;
    }
    let remaining = deadline.map(|d| d.saturating_duration_since(Instant::now()));
    let mut values = match solve_lp(model, &lower, &upper, remaining)? {
        Some(Outcome::Solved(values)) => values,
        Some(Outcome::Infeasible) | None => return Ok(None),
        Some(Outcome::Limit) => return Err(Error::LimitWithoutIncumbent),
    };
    normalize(model, &mut values);
    Ok(Some(values))
}

/// Presolves and solves one LP, retrying without big-M lowering when the
/// engine reports a numerical failure. `None` when presolve proves the
/// bounds infeasible.
fn solve_lp(
    model: &MilpModel,
    lower: &[f64],
    upper: &[f64],
    time_limit: Option<Duration>,
) -> Result<Option<Outcome<Vec<f64>>>> {
    let mut last = None;
    for tighten in [true, false] {
        let Ok(reduced) = presolve_with(model, lower, upper, tighten) else {
            return Ok(None);
        };
        if reduced.num_cols() == 0 {
            return Ok(Some(Outcome::Solved(reduced.fixed_values.clone())));
        }
        let mut lp = Lp::new(&reduced);
        match lp.solve(time_limit) {
            Ok(Outcome::Solved(s)) => return Ok(Some(Outcome::Solved(reduced.expand(&lp.values(&s))))),
            Ok(Outcome::Infeasible) => return Ok(Some(Outcome::Infeasible)),
            Ok(Outcome::Limit) => return Ok(Some(Outcome::Limit)),
            Err(e @ Error::Numerical(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("both attempts failed"))
}

/// Rounds binaries, clamps tiny negative flows, and sets change variables
/// and the slack to the exact values implied by the binaries.
pub fn normalize(model: &MilpModel, values: &mut [f64]) {
    for (v, var) in model.variables.iter().enumerate() {
        if var.integer {
            values[v] = values[v].round();
        } else if values[v] < 0.0 && values[v] > -1e-9 && var.lower == 0.0 {
            values[v] = 0.0;
        }
    }
    let Some(slack) = model.slack else { return };
    let sigma = model.sigma;
    let mut total = 0.0;
    for l in 0..model.stop.len() {
        for p in 1..model.stop[l].len() {
            for (j, cur) in model.stop[l][p].iter().enumerate() {
                if let (Some(cur), Some(prev), Some(d)) =
                    (cur, model.stop[l][p - 1][j], model.change_stop[l][p - 1][j])
                {
                    let c = sigma * (values[*cur] - values[prev]).abs();
                    values[d] = c;
                    total += c;
                }
            }
            let toggled = model.freq[l][p]
                .iter()
                .zip(&model.freq[l][p - 1])
                .any(|(a, b)| values[*a] != values[*b]);
            let c = if toggled { sigma } else { 0.0 };
            values[model.change_freq[l][p - 1]] = c;
            total += c;
        }
    }
    values[slack] = model.epsilon as f64 - total;
}

/// Sum over periods of the optimal single-period objective, a lower bound
/// on the generalised journey time of any multi-period plan. Sub-solves that
/// stop at a limit contribute their proven bound.
pub fn per_period_bound(instance: &ProblemInstance, limits: &SolveLimits) -> Result<f64> {
    let graph = build_graph(instance)?;
    let mut total = 0.0;
    for p in 0..instance.periods.len() {
        let mut single = instance.clone();
        let mut period = instance.periods[p].clone();
        period.index = 1;
        single.periods = vec![period];
        let model = build_model(&graph, &single, &ModelOptions { epsilon: 0, multi_period: false, pair_directions: false });
        let s = solve(&model, limits)?;
        match s.status {
            SolveStatus::Infeasible => {
                return Err(Error::InfeasiblePlan(format!("period {} alone is infeasible", p + 1)))
            }
            SolveStatus::Optimal => total += s.objective,
            SolveStatus::FeasibleAtLimit => total += s.bound,
        }
    }
    Ok(total)
}

#[derive(Clone, Debug)]
struct Node {
    fixes: Vec<(usize, f64)>,
    bound: f64,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: the smallest bound, then the oldest node, comes out first
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    model: &'a MilpModel,
    reduced: Reduced,
    lp: Lp,
    limits: &'a SolveLimits,
    deadline: Option<Instant>,
    /// Branching candidates: reduced column, rank (0 frequency, 1 stop).
    candidates: Vec<(usize, u8)>,
    /// Frequency columns per line and period, `None` where presolve fixed
    /// the variable.
    freq_groups: Vec<Vec<Option<usize>>>,
    stop_cols: Vec<usize>,
    root: Option<microlp::Solution>,
    current: Option<(microlp::Solution, Vec<(usize, f64)>)>,
    incumbent: Option<(f64, Vec<f64>)>,
    open: BinaryHeap<Node>,
    seq: u64,
    nodes: u64,
    /// Whether the rows are still the lowered big-M ones.
    tightened: bool,
}

enum NodeResult {
    Pruned,
    Integral,
    Branched(Node),
    Limit,
}

/// Nodes between two runs of the rounding dive.
const DIVE_INTERVAL: u64 = 200;

impl<'a> Search<'a> {
    fn new(model: &'a MilpModel, reduced: Reduced, limits: &'a SolveLimits, deadline: Option<Instant>) -> Self {
        let candidates = reduced
            .col_var
            .iter()
            .enumerate()
            .filter(|(_, v)| model.variables[**v].integer)
            .map(|(c, v)| (c, matches!(model.variables[*v].kind, VarKind::Stop { .. }) as u8))
            .collect();
        let freq_groups = model
            .freq
            .iter()
            .flat_map(|per| per.iter())
            .map(|fs| fs.iter().map(|v| reduced.var_col[*v]).collect())
            .collect();
        let stop_cols = model
            .stop
            .iter()
            .flat_map(|per| per.iter())
            .flat_map(|ss| ss.iter().flatten())
            .filter_map(|v| reduced.var_col[*v])
            .collect();
        Search {
            model,
            lp: Lp::new(&reduced),
            reduced,
            limits,
            deadline,
            candidates,
            freq_groups,
            stop_cols,
            root: None,
            current: None,
            incumbent: None,
            open: BinaryHeap::new(),
            seq: 0,
            nodes: 0,
            tightened: true,
        }
    }

    /// Swaps in the rows without big-M lowering after a numerical failure.
    fn untighten(&mut self) -> Result<()> {
        if !self.tightened {
            return Err(Error::Numerical("simplex failed on the untightened rows".into()));
        }
        let lower: Vec<f64> = self.model.variables.iter().map(|v| v.lower).collect();
        let upper: Vec<f64> = self.model.variables.iter().map(|v| v.upper).collect();
        let plain = presolve_with(self.model, &lower, &upper, false)
            .map_err(|_| Error::Inconsistent("presolve disagrees with itself".into()))?;
        self.lp = Lp::new(&plain);
        self.reduced = plain;
        self.tightened = false;
        self.current = None;
        Ok(())
    }

    fn remaining(&self) -> Option<Duration> {
        self.deadline.map(|d| d.saturating_duration_since(Instant::now()))
    }

    fn out_of_time(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn prune_tol(&self, obj: f64) -> f64 {
        1e-9 * obj.abs().max(1.0)
    }

    fn offer(&mut self, values: Vec<f64>) {
        let obj = self.model.objective(&values);
        if self.incumbent.as_ref().is_none_or(|(best, _)| obj < *best - self.prune_tol(obj)) {
            self.incumbent = Some((obj, values));
        }
    }

    fn incumbent_obj(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |(o, _)| *o)
    }

    fn global_bound(&self, pending: Option<&Node>) -> f64 {
        let mut b = self.incumbent_obj();
        if let Some(n) = self.open.peek() {
            b = b.min(n.bound);
        }
        if let Some(n) = pending {
            b = b.min(n.bound);
        }
        b
    }

    fn gap_reached(&self, pending: Option<&Node>) -> bool {
        let Some(limit) = self.limits.gap_limit else { return false };
        let Some((obj, _)) = &self.incumbent else { return false };
        relative_gap(*obj, self.global_bound(pending)) <= limit
    }

    fn solve_root(&mut self) -> Result<Outcome> {
        match self.lp.solve(self.remaining()) {
            Err(Error::Numerical(_)) => {
                self.untighten()?;
                self.lp.solve(self.remaining())
            }
            other => other,
        }
    }

    fn run(mut self, start: Instant) -> Result<Solution> {
        if self.reduced.num_cols() == 0 {
            let mut values = self.reduced.fixed_values.clone();
            normalize(self.model, &mut values);
            self.offer(values);
            return self.finish(start, true, None);
        }
        match self.solve_root()? {
            Outcome::Solved(s) => self.root = Some(*s),
            Outcome::Infeasible => return Ok(Solution::infeasible(start, 0)),
            Outcome::Limit => return self.finish(start, false, Some(f64::NEG_INFINITY)),
        }
        let root = self.root.clone().expect("root solved");
        self.construct(&root)?;
        self.improve(&root);
        self.dive(root)?;
        let root_obj = self.root.as_ref().unwrap().objective() + self.reduced.offset;
        let mut next = Some(Node { fixes: Vec::new(), bound: root_obj, seq: 0 });
        let mut completed = false;
        loop {
            let node = match next.take() {
                Some(n) => n,
                None => match self.open.pop() {
                    Some(n) => n,
                    None => {
                        completed = true;
                        break;
                    }
                },
            };
            if node.bound >= self.incumbent_obj() - self.prune_tol(node.bound) {
                continue;
            }
            if self.gap_reached(Some(&node)) {
                self.open.push(node);
                completed = true;
                break;
            }
            if self.out_of_time() || self.limits.node_limit.is_some_and(|n| self.nodes >= n) {
                self.open.push(node);
                break;
            }
            match self.process(node)? {
                NodeResult::Pruned | NodeResult::Integral => {}
                NodeResult::Branched(child) => next = Some(child),
                NodeResult::Limit => break,
            }
        }
        let bound = if completed && self.open.is_empty() && next.is_none() {
            None
        } else {
            Some(self.global_bound(next.as_ref()))
        };
        self.finish(start, completed, bound)
    }

    fn finish(self, start: Instant, completed: bool, bound: Option<f64>) -> Result<Solution> {
        let Some((_, raw)) = self.incumbent else {
            return if completed { Ok(Solution::infeasible(start, self.nodes)) } else { Err(Error::LimitWithoutIncumbent) };
        };
        // re-solve the flows with the binaries exactly integral
        let values = match solve_fixed_binaries(self.model, &raw, None) {
            Ok(Some(v)) => v,
            _ => {
                let mut v = raw;
                normalize(self.model, &mut v);
                v
            }
        };
        let objective = self.model.objective(&values);
        let bound = bound.unwrap_or(objective).min(objective);
        let gap = relative_gap(objective, bound);
        Ok(Solution {
            gjt: self.model.gjt(&values),
            values,
            objective,
            bound,
            gap,
            status: if completed { SolveStatus::Optimal } else { SolveStatus::FeasibleAtLimit },
            wall_time: start.elapsed().as_secs_f64(),
            nodes: self.nodes,
        })
    }

    /// Evaluates plans read off the root relaxation: frequencies per period
    /// or constant over the day (whichever option the LP weights most), and
    /// stops opened where the LP uses them in that period, in any period, or
    /// everywhere. Plans exceeding the adjustment limit are skipped. Without
    /// an incumbent after that, every line is set to its k-th frequency with
    /// all stops open, for decreasing k, until one is feasible.
    fn construct(&mut self, root: &microlp::Solution) -> Result<()> {
        let lp = self.reduced.expand(&self.lp.values(root));
        let model = self.model;
        // option k: 0 = closed, i + 1 = i-th frequency
        let score = |l: usize, p: usize, k: usize| -> f64 {
            let ys = model.freq[l][p].iter().map(|v| lp[*v]);
            if k == 0 {
                1.0 - ys.sum::<f64>()
            } else {
                lp[model.freq[l][p][k - 1]]
            }
        };
        let argmax = |n: usize, f: &dyn Fn(usize) -> f64| (0..=n).fold(0, |b, k| if f(k) > f(b) + 1e-12 { k } else { b });
        let per_period: Vec<Vec<usize>> = model
            .freq
            .iter()
            .enumerate()
            .map(|(l, per)| (0..per.len()).map(|p| argmax(per[p].len(), &|k| score(l, p, k))).collect())
            .collect();
        let constant: Vec<Vec<usize>> = model
            .freq
            .iter()
            .enumerate()
            .map(|(l, per)| {
                let n = per.first().map_or(0, |fs| fs.len());
                vec![argmax(n, &|k| (0..per.len()).map(|p| score(l, p, k)).sum()); per.len()]
            })
            .collect();
        let used = |v: usize| lp[v] > INTEGRALITY_TOL;
        let stops_used = |l: usize, p: usize, j: usize| model.stop[l][p][j].is_some_and(used);
        let stops_any = |l: usize, _: usize, j: usize| (0..model.stop[l].len()).any(|p| stops_used(l, p, j));
        let stops_all = |_: usize, _: usize, _: usize| true;
        let stop_rules: [&dyn Fn(usize, usize, usize) -> bool; 3] = [&stops_used, &stops_any, &stops_all];

        let mut tried: Vec<Vec<f64>> = Vec::new();
        for freqs in [&per_period, &constant] {
            for rule in stop_rules {
                if self.out_of_time() {
                    return Ok(());
                }
                let plan = self.plan_values(freqs, rule);
                if tried.contains(&plan) || self.plan_changes(&plan) > model.epsilon as f64 + 1e-9 {
                    continue;
                }
                if let Some(v) = solve_fixed_binaries(model, &plan, self.deadline).ok().flatten() {
                    self.offer(v);
                }
                tried.push(plan);
            }
        }
        if self.incumbent.is_some() {
            return Ok(());
        }
        let widest = model.freq.iter().flatten().map(|fs| fs.len()).max().unwrap_or(0);
        for k in (1..=widest).rev() {
            if self.out_of_time() {
                return Ok(());
            }
            let freqs: Vec<Vec<usize>> =
                model.freq.iter().map(|per| per.iter().map(|fs| k.min(fs.len())).collect()).collect();
            let plan = self.plan_values(&freqs, &stops_all);
            if tried.contains(&plan) {
                continue;
            }
            let found = solve_fixed_binaries(model, &plan, self.deadline).ok().flatten();
            tried.push(plan);
            if let Some(v) = found {
                self.offer(v);
                break;
            }
        }
        Ok(())
    }

    /// Moves from the incumbent toward the root relaxation: switching a line
    /// in one period to a frequency the LP puts weight on, or flipping a stop
    /// the LP rounds the other way. Moves are ranked by that weight and
    /// applied greedily while the plan keeps to the budgets, the other rows
    /// on binaries only, and the adjustment limit; the result is evaluated
    /// with the binaries fixed. Frequency moves alone and all moves are tried,
    /// repeating from any improved incumbent.
    fn improve(&mut self, root: &microlp::Solution) {
        let model = self.model;
        let lp = self.reduced.expand(&self.lp.values(root));
        let plan_rows: Vec<usize> = (0..model.num_rows())
            .filter(|r| {
                let terms = &model.constraints[*r].terms;
                !terms.is_empty() && terms.iter().all(|(v, _)| model.variables[*v].integer)
            })
            .collect();
        let mut tried: Vec<Vec<f64>> = Vec::new();
        loop {
            let Some((before, start)) = self.incumbent.clone() else { return };
            let fits = |values: &[f64]| {
                plan_rows.iter().all(|r| model.constraints[*r].violation(values) <= 1e-9)
                    && self.plan_changes(values) <= model.epsilon as f64 + 1e-9
            };
            // (weight, is a frequency move, assignments)
            let mut moves: Vec<(f64, bool, Vec<(usize, f64)>)> = Vec::new();
            for fs in model.freq.iter().flatten() {
                for v in fs {
                    if start[*v] < 0.5 && lp[*v] > INTEGRALITY_TOL {
                        moves.push((lp[*v], true, fs.iter().map(|w| (*w, if w == v { 1.0 } else { 0.0 })).collect()));
                    }
                }
            }
            for v in model.stop.iter().flatten().flatten().flatten() {
                let diff = (lp[*v] - start[*v]).abs();
                if diff > 0.5 {
                    moves.push((diff, false, vec![(*v, 1.0 - start[*v])]));
                }
            }
            moves.sort_by(|a, b| b.0.total_cmp(&a.0));
            let greedy = |with_stops: bool| -> Option<Vec<f64>> {
                let mut values = start.clone();
                let mut changed = false;
                for (_, is_freq, m) in &moves {
                    if !is_freq && !with_stops {
                        continue;
                    }
                    let saved: Vec<(usize, f64)> = m.iter().map(|(v, _)| (*v, values[*v])).collect();
                    for (v, x) in m {
                        values[*v] = *x;
                    }
                    if fits(&values) {
                        changed = true;
                    } else {
                        for (v, x) in saved {
                            values[v] = x;
                        }
                    }
                }
                changed.then_some(values)
            };
            let plans: Vec<Vec<f64>> = [greedy(false), greedy(true)].into_iter().flatten().collect();
            for plan in plans {
                if self.out_of_time() {
                    return;
                }
                if tried.contains(&plan) {
                    continue;
                }
                if let Some(v) = solve_fixed_binaries(model, &plan, self.deadline).ok().flatten() {
                    self.offer(v);
                }
                tried.push(plan);
            }
            if self.incumbent_obj() >= before {
                return;
            }
        }
    }

    /// Binary values for frequency options `freqs[line][period]` (0 closed)
    /// and the stops selected by `open`; other variables zero.
    fn plan_values(&self, freqs: &[Vec<usize>], open: &dyn Fn(usize, usize, usize) -> bool) -> Vec<f64> {
        let model = self.model;
        let mut values = vec![0.0; model.num_vars()];
        for (l, per) in model.freq.iter().enumerate() {
            for (p, fs) in per.iter().enumerate() {
                for (i, v) in fs.iter().enumerate() {
                    values[*v] = if freqs[l][p] == i + 1 { 1.0 } else { 0.0 };
                }
                for (j, v) in model.stop[l][p].iter().enumerate() {
                    if let Some(v) = v {
                        values[*v] = if open(l, p, j) { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        values
    }

    /// Adjustments made by the binaries in `values`, as the model counts them.
    fn plan_changes(&self, values: &[f64]) -> f64 {
        let mut v = values.to_vec();
        normalize(self.model, &mut v);
        self.model.epsilon as f64 - self.model.slack.map_or(self.model.epsilon as f64, |s| v[s])
    }

    /// Rounding dive from an LP solution. One line and period at a time is
    /// given the frequency the LP leans to most (closing the line only when
    /// the LP does not use it, or as a last resort), re-solving after each
    /// decision; an option that makes the LP infeasible is banned. Stops used
    /// by any flow are then opened, the rest closed, and the plan is
    /// evaluated with all binaries fixed.
    fn dive(&mut self, start: microlp::Solution) -> Result<()> {
        let mut sol = start;
        let groups = self.freq_groups.len();
        // banned[g][k]: option k of group g (0 = closed, k = frequency k - 1)
        let mut banned: Vec<Vec<bool>> = self.freq_groups.iter().map(|g| vec![false; g.len() + 1]).collect();
        let mut decided = vec![false; groups];
        // leave half of the remaining time to the tree search
        let now = Instant::now();
        let give_up = self.deadline.map(|d| now + d.saturating_duration_since(now) / 2);
        loop {
            if give_up.is_some_and(|t| Instant::now() >= t) || sol.objective() + self.reduced.offset >= self.incumbent_obj() {
                return Ok(());
            }
            let cols = self.lp.values(&sol);
            let mut pick: Option<(usize, usize, f64)> = None;
            for g in 0..groups {
                if decided[g] {
                    continue;
                }
                let ys: Vec<f64> = self.freq_groups[g].iter().map(|c| c.map_or(0.0, |c| cols[c])).collect();
                let integral = ys.iter().all(|y| (y - y.round()).abs() <= INTEGRALITY_TOL);
                if integral && !banned[g].iter().any(|b| *b) {
                    continue;
                }
                let used = ys.iter().sum::<f64>() > INTEGRALITY_TOL;
                for k in 0..=ys.len() {
                    if banned[g][k] || (k > 0 && self.freq_groups[g][k - 1].is_none()) {
                        continue;
                    }
                    let score = match (k, used) {
                        (0, true) => -1.0,
                        (0, false) => 2.0,
                        _ => ys[k - 1],
                    };
                    if pick.is_none_or(|(_, _, s)| score > s + 1e-12) {
                        pick = Some((g, k, score));
                    }
                }
                if banned[g].iter().all(|b| *b) {
                    return Ok(());
                }
            }
            let Some((g, k, _)) = pick else { break };
            let option: Vec<(usize, f64)> = self.freq_groups[g]
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.map(|c| (c, if k == i + 1 { 1.0 } else { 0.0 })))
                .collect();
            let mut trial = Some(sol.clone());
            for &(c, x) in &option {
                let Some(t) = trial.take() else { break };
                match self.fix_checked(t, c, x) {
                    Ok(Some(s)) => trial = Some(s),
                    Ok(None) => break,
                    Err(_) => return Ok(()),
                }
            }
            match trial {
                Some(t) => {
                    sol = t;
                    decided[g] = true;
                }
                None => banned[g][k] = true,
            }
        }
        let cols = self.lp.values(&sol);
        let mut values = self.reduced.expand(&cols);
        let opened: Vec<f64> = values.clone();
        for &c in &self.stop_cols {
            let v = self.reduced.col_var[c];
            values[v] = if opened[v] > INTEGRALITY_TOL { 1.0 } else { 0.0 };
        }
        let mut plan = solve_fixed_binaries(self.model, &values, self.deadline).ok().flatten();
        if plan.is_none() {
            for &c in &self.stop_cols {
                values[self.reduced.col_var[c]] = 1.0;
            }
            plan = solve_fixed_binaries(self.model, &values, self.deadline).ok().flatten();
        }
        if let Some(plan) = plan {
            self.offer(plan);
        }
        Ok(())
    }

    /// Fixes column `c` to `x` with a warm start. The engine can report a
    /// fixing of a basic column as infeasible when it is not, so that verdict
    /// is re-checked by imposing the fixing as a row on the original state.
    fn fix_checked(&self, sol: microlp::Solution, c: usize, x: f64) -> Result<Option<microlp::Solution>> {
        let backup = sol.clone();
        match Outcome::from_result(sol.fix_var(self.lp.vars[c], x))? {
            Outcome::Solved(s) => Ok(Some(*s)),
            Outcome::Limit => Err(Error::LimitWithoutIncumbent),
            Outcome::Infeasible => {
                let row = [(self.lp.vars[c], 1.0)];
                match Outcome::from_result(backup.add_constraint(&row[..], microlp::ComparisonOp::Eq, x))? {
                    Outcome::Solved(s) => Ok(Some(*s)),
                    Outcome::Infeasible => Ok(None),
                    Outcome::Limit => Err(Error::LimitWithoutIncumbent),
                }
            }
        }
    }

    /// Brings the LP to the fixings of `target`, from the current state or
    /// from the root, whichever needs fewer edits.
    fn load(&mut self, target: &[(usize, f64)]) -> Result<Outcome> {
        let mut sorted = target.to_vec();
        sorted.sort_by_key(|f| f.0);
        let (base, base_fixes) = match self.current.take() {
            Some((sol, fixes)) => {
                let unfix: Vec<usize> = fixes
                    .iter()
                    .filter(|f| !sorted.contains(f))
                    .map(|f| f.0)
                    .collect();
                let fix_count = sorted.iter().filter(|f| !fixes.contains(f)).count();
                if unfix.len() + fix_count <= sorted.len() {
                    let mut sol = sol;
                    for c in unfix {
                        match Outcome::from_result(sol.unfix_var(self.lp.vars[c]).map(|(o, _)| o))? {
                            Outcome::Solved(s) => sol = *s,
                            Outcome::Infeasible => return Err(Error::Numerical("relaxing a bound made the LP infeasible".into())),
                            Outcome::Limit => return Ok(Outcome::Limit),
                        }
                    }
                    let kept: Vec<(usize, f64)> = fixes.into_iter().filter(|f| sorted.contains(f)).collect();
                    (sol, kept)
                } else {
                    (self.root.clone().expect("root solved"), Vec::new())
                }
            }
            None => (self.root.clone().expect("root solved"), Vec::new()),
        };
        let mut sol = base;
        let mut applied = base_fixes;
        for f in &sorted {
            if applied.contains(f) {
                continue;
            }
            match Outcome::from_result(sol.fix_var(self.lp.vars[f.0], f.1))? {
                Outcome::Solved(s) => {
                    sol = *s;
                    applied.push(*f);
                }
                // the engine can wrongly report a warm-started fixing as
                // infeasible, so only a fresh solve may prune the node
                Outcome::Infeasible => return self.load_fresh(target),
                Outcome::Limit => return Ok(Outcome::Limit),
            }
        }
        applied.sort_by_key(|f| f.0);
        self.current = Some((sol.clone(), applied));
        Ok(Outcome::Solved(Box::new(sol)))
    }

    /// Solves the node from scratch, used when a warm-started edit fails
    /// numerically. The solution is not kept as a base for later nodes
    /// since its variables belong to a separate problem.
    fn load_fresh(&mut self, fixes: &[(usize, f64)]) -> Result<Outcome> {
        for attempt in 0..2 {
            let mut reduced = self.reduced.clone();
            for &(c, x) in fixes {
                reduced.lower[c] = x;
                reduced.upper[c] = x;
            }
            let mut lp = Lp::new(&reduced);
            match lp.solve(self.remaining()) {
                Err(Error::Numerical(_)) if attempt == 0 && self.tightened => {
                    // the plain rows keep the column layout, so fixings stay valid
                    self.untighten()?;
                    match self.solve_root()? {
                        Outcome::Solved(s) => self.root = Some(*s),
                        _ => return Err(Error::Numerical("root re-solve failed".into())),
                    }
                }
                other => return other,
            }
        }
        unreachable!()
    }

    fn process(&mut self, node: Node) -> Result<NodeResult> {
        let sol = if node.fixes.is_empty() && self.current.is_none() {
            let root = self.root.clone().expect("root solved");
            self.current = Some((root.clone(), Vec::new()));
            root
        } else {
            self.nodes += 1;
            let loaded = match self.load(&node.fixes) {
                Err(Error::Numerical(_)) => {
                    self.current = None;
                    self.load_fresh(&node.fixes)?
                }
                other => other?,
            };
            match loaded {
                Outcome::Solved(s) => *s,
                Outcome::Infeasible => return Ok(NodeResult::Pruned),
                Outcome::Limit => {
                    self.open.push(node);
                    return Ok(NodeResult::Limit);
                }
            }
        };
        let obj = sol.objective() + self.reduced.offset;
        if obj >= self.incumbent_obj() - self.prune_tol(obj) {
            return Ok(NodeResult::Pruned);
        }
        let cols = self.lp.values(&sol);
        let mut best: Option<(usize, f64, u8, f64)> = None;
        for &(c, rank) in &self.candidates {
            let x = cols[c];
            let frac = (x - x.round()).abs();
            if frac <= INTEGRALITY_TOL {
                continue;
            }
            let score = (x - 0.5).abs();
            let better = match best {
                None => true,
                Some((_, _, brank, bscore)) => {
                    score < bscore - 1e-12 || ((score - bscore).abs() <= 1e-12 && rank < brank)
                }
            };
            if better {
                best = Some((c, x, rank, score));
            }
        }
        let Some((col, x, _, _)) = best else {
            let values = self.reduced.expand(&cols);
            self.offer(values);
            return Ok(NodeResult::Integral);
        };
        if self.nodes % DIVE_INTERVAL == 0 && self.nodes > 0 {
            self.dive(sol.clone())?;
        }
        let preferred = if x >= 0.5 { 1.0 } else { 0.0 };
        let mut near = node.fixes.clone();
        near.push((col, preferred));
        let mut far = node.fixes;
        far.push((col, 1.0 - preferred));
        self.seq += 1;
        self.open.push(Node { fixes: far, bound: obj, seq: self.seq });
        self.seq += 1;
        Ok(NodeResult::Branched(Node { fixes: near, bound: obj, seq: self.seq }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::figure_instance;
    use crate::instance::Mode;

    #[test]
    fn single_line_picks_highest_affordable_frequency() {
        let inst = figure_instance(Mode::Symmetric);
        let g = build_graph(&inst).unwrap();
        let m = build_model(&g, &inst, &ModelOptions::with_epsilon(0));
        let s = solve(&m, &SolveLimits::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        // Aa->Cc, 5 pax/h: board at f=2 (31.85), drive 6 + skip 0 + drive 7, alight 0.7
        let expected = 5.0 * (31.85 + 6.0 + 7.0 + 0.7);
        assert!((s.gjt - expected).abs() < 1e-6, "{} vs {}", s.gjt, expected);
    }

    #[test]
    fn zero_budget_with_demand_is_infeasible() {
        let mut inst = figure_instance(Mode::Symmetric);
        inst.periods[0].budget = 0.0;
        let g = build_graph(&inst).unwrap();
        let m = build_model(&g, &inst, &ModelOptions::with_epsilon(0));
        let s = solve(&m, &SolveLimits::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn relaxation_bounds_the_optimum() {
        let inst = figure_instance(Mode::Symmetric);
        let g = build_graph(&inst).unwrap();
        let m = build_model(&g, &inst, &ModelOptions::with_epsilon(0));
        let r = lp_relax(&m).unwrap();
        let s = solve(&m, &SolveLimits::default()).unwrap();
        assert!(r.objective <= s.objective + 1e-9);
    }
}

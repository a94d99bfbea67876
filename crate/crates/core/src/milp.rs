//! Multi-period line planning model.
//!
//! Binary decisions are a stop flag per (line, intermediate station, period)
//! and a frequency choice per (line, frequency, period). Passenger flows are
//! one commodity per origin station and period on the change-and-go graph.
//! Between consecutive periods, change variables count toggled stops and
//! frequency switches; their total plus a slack equals the adjustment limit
//! `epsilon`, and a small reward on the slack prefers plans that use fewer
//! adjustments.

use crate::cng::{node_demand, ArcKind, CngGraph};
use crate::instance::{Mode, ProblemInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    /// Line stops at the intermediate station at route `position`.
    Stop { line: usize, position: usize, period: usize },
    /// Line runs at its `freq_index`-th allowed frequency.
    Freq { line: usize, freq_index: usize, period: usize },
    Flow { arc: usize, origin: usize, period: usize },
    /// Stop toggles between `period - 1` and `period`.
    ChangeStop { line: usize, period: usize, position: usize },
    ChangeFreq { line: usize, period: usize },
    Slack,
}

impl VarKind {
    pub fn is_binary(&self) -> bool {
        matches!(self, VarKind::Stop { .. } | VarKind::Freq { .. })
    }
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
    pub cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub tag: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[*v]).sum()
    }

    /// Amount by which `values` violate the row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let a = self.activity(values);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelOptions {
    /// Maximum number of adjustments.
    pub epsilon: u32,
    /// Include terminal balance, change counting and the adjustment limit.
    /// Off for single-period relaxations and fixed-plan assignment.
    pub multi_period: bool,
    /// In asymmetric mode, force each line and its reverse to share stops
    /// and frequencies.
    pub pair_directions: bool,
}

impl ModelOptions {
    pub fn with_epsilon(epsilon: u32) -> Self {
        ModelOptions { epsilon, multi_period: true, pair_directions: false }
    }
}

/// Where the flow columns of each (period, origin) commodity start.
#[derive(Clone, Debug)]
pub struct FlowLayout {
    pub start: usize,
    pub num_arcs: usize,
    pub num_origins: usize,
    pub num_periods: usize,
    /// First flow-conservation row; rows are laid out by period, origin, node.
    pub conservation_start: usize,
    pub num_nodes: usize,
}

impl FlowLayout {
    pub fn var(&self, arc: usize, origin: usize, period: usize) -> usize {
        self.start + (period * self.num_origins + origin) * self.num_arcs + arc
    }

    pub fn conservation_row(&self, node: usize, origin: usize, period: usize) -> usize {
        self.conservation_start + (period * self.num_origins + origin) * self.num_nodes + node
    }

    pub fn len(&self) -> usize {
        self.num_arcs * self.num_origins * self.num_periods
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub epsilon: u32,
    pub mode: Mode,
    pub sigma: f64,
    pub delta: f64,
    pub options: ModelOptions,
    pub flows: FlowLayout,
    /// `stop[line][period][position]`, `None` at terminals.
    pub stop: Vec<Vec<Vec<Option<usize>>>>,
    /// `freq[line][period][freq_index]`.
    pub freq: Vec<Vec<Vec<usize>>>,
    /// `change_stop[line][period - 1][position]`, present for periods `1..`.
    pub change_stop: Vec<Vec<Vec<Option<usize>>>>,
    pub change_freq: Vec<Vec<usize>>,
    pub slack: Option<usize>,
    /// Arc tail/head per arc, for flow-structure aware presolve.
    pub arc_ends: Vec<(usize, usize)>,
    /// `(in node, out nodes)` per station, used to find useful arcs per origin.
    pub station_nodes: Vec<(usize, usize)>,
}

impl MilpModel {
    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn binaries(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.variables.len()).filter(|v| self.variables[*v].integer)
    }

    /// Objective value, generalised journey time minus the slack reward.
    pub fn objective(&self, values: &[f64]) -> f64 {
        self.variables.iter().zip(values).map(|(v, x)| v.cost * x).sum()
    }

    /// Generalised journey time alone (the flow part of the objective).
    pub fn gjt(&self, values: &[f64]) -> f64 {
        let r = self.flows.start..self.flows.start + self.flows.len();
        self.variables[r.clone()].iter().zip(&values[r]).map(|(v, x)| v.cost * x).sum()
    }

    /// First row violated by more than `tol`, with its activity.
    pub fn first_violation(&self, values: &[f64], tol: f64) -> Option<(usize, f64)> {
        self.constraints
            .iter()
            .enumerate()
            .find(|(_, c)| c.violation(values) > tol)
            .map(|(i, c)| (i, c.activity(values)))
    }

    /// First variable outside its bounds or not integral, beyond `tol`.
    pub fn first_bound_violation(&self, values: &[f64], tol: f64) -> Option<usize> {
        self.variables.iter().zip(values).position(|(v, x)| {
            *x < v.lower - tol || *x > v.upper + tol || (v.integer && (x - x.round()).abs() > tol)
        })
    }

    pub fn row_by_tag(&self, tag: &str) -> Option<usize> {
        self.constraints.iter().position(|c| c.tag == tag)
    }

    /// Human-readable column name, stable across runs.
    pub fn var_name(&self, v: usize, instance: &ProblemInstance) -> String {
        let line = |l: usize| instance.lines[l].id.as_str();
        let st = |l: usize, j: usize| instance.stations[instance.lines[l].route[j]].id.as_str();
        match self.variables[v].kind {
            VarKind::Stop { line: l, position, period } => format!("stop[{},{},{}]", line(l), st(l, position), period + 1),
            VarKind::Freq { line: l, freq_index, period } => {
                format!("freq[{},{},{}]", line(l), instance.lines[l].frequencies[freq_index], period + 1)
            }
            VarKind::Flow { arc, origin, period } => {
                format!("flow[{},{},{}]", arc, instance.stations[origin].id, period + 1)
            }
            VarKind::ChangeStop { line: l, period, position } => {
                format!("chgstop[{},{},{}]", line(l), st(l, position), period + 1)
            }
            VarKind::ChangeFreq { line: l, period } => format!("chgfreq[{},{}]", line(l), period + 1),
            VarKind::Slack => "slack".to_string(),
        }
    }
}

struct Assembler {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
}

impl Assembler {
    fn var(&mut self, kind: VarKind, lower: f64, upper: f64, cost: f64) -> usize {
        let integer = kind.is_binary();
        self.variables.push(Variable { kind, lower, upper, integer, cost });
        self.variables.len() - 1
    }

    fn row(&mut self, tag: String, mut terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        terms.retain(|(_, c)| *c != 0.0);
        self.constraints.push(Constraint { tag, terms, sense, rhs });
    }
}

/// Assembles the model for `graph` over all periods of `instance`.
pub fn build_model(graph: &CngGraph, instance: &ProblemInstance, options: &ModelOptions) -> MilpModel {
    let sigma = instance.sigma();
    let np = instance.periods.len();
    let ns = instance.num_stations();
    let na = graph.num_arcs();
    let nn = graph.num_nodes();
    let lines = &instance.lines;
    let sid = |s: usize| instance.stations[s].id.as_str();
    let mut m = Assembler { variables: Vec::new(), constraints: Vec::new() };

    let mut stop = Vec::with_capacity(lines.len());
    let mut freq = Vec::with_capacity(lines.len());
    for (l, line) in lines.iter().enumerate() {
        let mut ls = Vec::with_capacity(np);
        let mut lf: Vec<Vec<usize>> = Vec::with_capacity(np);
        for p in 0..np {
            let mut by_pos = vec![None; line.route.len()];
            for j in line.intermediate_positions() {
                by_pos[j] = Some(m.var(VarKind::Stop { line: l, position: j, period: p }, 0.0, 1.0, 0.0));
            }
            ls.push(by_pos);
            lf.push(
                (0..line.frequencies.len())
                    .map(|fi| m.var(VarKind::Freq { line: l, freq_index: fi, period: p }, 0.0, 1.0, 0.0))
                    .collect(),
            );
        }
        stop.push(ls);
        freq.push(lf);
    }

    let flow_start = m.variables.len();
    for (p, period) in instance.periods.iter().enumerate() {
        for o in 0..ns {
            for a in &graph.arcs {
                let cost = period.length_hours * a.cost;
                m.var(VarKind::Flow { arc: a.id, origin: o, period: p }, 0.0, f64::INFINITY, cost);
            }
        }
    }
    let layout = FlowLayout {
        start: flow_start,
        num_arcs: na,
        num_origins: ns,
        num_periods: np,
        conservation_start: 0,
        num_nodes: nn,
    };

    let mut change_stop = vec![Vec::new(); lines.len()];
    let mut change_freq = vec![Vec::new(); lines.len()];
    let mut slack = None;
    if options.multi_period {
        for (l, line) in lines.iter().enumerate() {
            for p in 1..np {
                let mut by_pos = vec![None; line.route.len()];
                for j in line.intermediate_positions() {
                    by_pos[j] =
                        Some(m.var(VarKind::ChangeStop { line: l, period: p, position: j }, 0.0, f64::INFINITY, 0.0));
                }
                change_stop[l].push(by_pos);
            }
        }
        for (l, _) in lines.iter().enumerate() {
            for p in 1..np {
                change_freq[l].push(m.var(VarKind::ChangeFreq { line: l, period: p }, 0.0, f64::INFINITY, 0.0));
            }
        }
        slack = Some(m.var(VarKind::Slack, 0.0, options.epsilon as f64, -instance.delta));
    }

    // flow conservation: inflow - outflow = node demand
    for (p, period) in instance.periods.iter().enumerate() {
        for o in 0..ns {
            for v in 0..nn {
                let mut terms = Vec::with_capacity(graph.incoming(v).len() + graph.outgoing(v).len());
                for &a in graph.incoming(v) {
                    terms.push((layout.var(a, o, p), 1.0));
                }
                for &a in graph.outgoing(v) {
                    terms.push((layout.var(a, o, p), -1.0));
                }
                let b = node_demand(graph, o, period, v);
                m.row(format!("flowcons[{},{},{}]", sid(o), v, p + 1), terms, Sense::Eq, b);
            }
        }
    }

    for (l, line) in lines.iter().enumerate() {
        for p in 0..np {
            let terms = freq[l][p].iter().map(|&v| (v, 1.0)).collect();
            m.row(format!("freqchoice[{},{}]", line.id, p + 1), terms, Sense::Le, 1.0);
        }
    }

    for (l, line) in lines.iter().enumerate() {
        let cap = line.capacity as f64;
        let big = line.max_frequency() as f64 * cap * sigma;
        for p in 0..np {
            for &a in graph.line_arcs(l) {
                let arc = &graph.arcs[a];
                let all_origins = |extra: Vec<(usize, f64)>| -> Vec<(usize, f64)> {
                    let mut t: Vec<(usize, f64)> = (0..ns).map(|o| (layout.var(a, o, p), 1.0)).collect();
                    t.extend(extra);
                    t
                };
                let stop_var = stop[l][p][arc.position];
                match arc.kind {
                    ArcKind::Drive => {
                        let extra = line
                            .frequencies
                            .iter()
                            .enumerate()
                            .map(|(fi, f)| (freq[l][p][fi], -(*f as f64) * cap))
                            .collect();
                        m.row(format!("cap-drive[{},{},{}]", line.id, a, p + 1), all_origins(extra), Sense::Le, 0.0);
                    }
                    ArcKind::Stop => {
                        let x = stop_var.expect("stop arcs sit at intermediate stations");
                        m.row(
                            format!("cap-stop[{},{},{}]", line.id, a, p + 1),
                            all_origins(vec![(x, -big)]),
                            Sense::Le,
                            0.0,
                        );
                    }
                    ArcKind::Skip => {
                        let x = stop_var.expect("skip arcs sit at intermediate stations");
                        m.row(
                            format!("cap-skip[{},{},{}]", line.id, a, p + 1),
                            all_origins(vec![(x, big)]),
                            Sense::Le,
                            big,
                        );
                    }
                    _ => {}
                }
                if arc.kind.is_boarding() {
                    if let Some(x) = stop_var {
                        m.row(
                            format!("cap-board[{},{},{}]", line.id, a, p + 1),
                            all_origins(vec![(x, -big)]),
                            Sense::Le,
                            0.0,
                        );
                    }
                }
                if let (ArcKind::In | ArcKind::ChIn, Some(f)) = (arc.kind, arc.frequency) {
                    let fi = line.frequencies.iter().position(|x| *x == f).expect("arc frequency is allowed");
                    let bound = (freq[l][p][fi], -(f as f64) * cap * sigma);
                    if arc.kind == ArcKind::In {
                        let s = arc.station.expect("in arcs have a station");
                        m.row(
                            format!("freq-in[{},{},{}]", line.id, a, p + 1),
                            vec![(layout.var(a, s, p), 1.0), bound],
                            Sense::Le,
                            0.0,
                        );
                    } else {
                        m.row(
                            format!("freq-chin[{},{},{}]", line.id, a, p + 1),
                            all_origins(vec![bound]),
                            Sense::Le,
                            0.0,
                        );
                    }
                }
            }
        }
    }

    for (p, period) in instance.periods.iter().enumerate() {
        let mut terms = Vec::new();
        for (l, line) in lines.iter().enumerate() {
            for (fi, f) in line.frequencies.iter().enumerate() {
                terms.push((freq[l][p][fi], sigma * line.length_km * *f as f64));
            }
        }
        m.row(format!("budget[{}]", p + 1), terms, Sense::Le, period.budget);
    }

    if options.multi_period && instance.mode == Mode::Asymmetric {
        for s in 0..ns {
            let leaving = instance.lines_leaving(s);
            let entering = instance.lines_entering(s);
            if leaving.is_empty() && entering.is_empty() {
                continue;
            }
            let mut terms = Vec::new();
            for (group, sign) in [(&leaving, 1.0), (&entering, -1.0)] {
                for &l in group {
                    for (p, period) in instance.periods.iter().enumerate() {
                        for (fi, f) in lines[l].frequencies.iter().enumerate() {
                            terms.push((freq[l][p][fi], sign * period.length_hours * *f as f64));
                        }
                    }
                }
            }
            m.row(format!("terminal[{}]", sid(s)), terms, Sense::Eq, 0.0);
        }
    }

    if options.pair_directions && instance.mode == Mode::Asymmetric {
        for (l, line) in lines.iter().enumerate() {
            let Some(r) = instance.reverse_partner(l) else { continue };
            if r < l {
                continue;
            }
            let n = line.route.len();
            for p in 0..np {
                for (fi, f) in line.frequencies.iter().enumerate() {
                    m.row(
                        format!("pair-freq[{},{},{}]", line.id, f, p + 1),
                        vec![(freq[l][p][fi], 1.0), (freq[r][p][fi], -1.0)],
                        Sense::Eq,
                        0.0,
                    );
                }
                for j in line.intermediate_positions() {
                    let (a, b) = (stop[l][p][j].unwrap(), stop[r][p][n - 1 - j].unwrap());
                    m.row(
                        format!("pair-stop[{},{},{}]", line.id, sid(line.route[j]), p + 1),
                        vec![(a, 1.0), (b, -1.0)],
                        Sense::Eq,
                        0.0,
                    );
                }
            }
        }
    }

    if options.multi_period {
        let mut total = Vec::new();
        for (l, line) in lines.iter().enumerate() {
            for p in 1..np {
                for j in line.intermediate_positions() {
                    let (cur, prev) = (stop[l][p][j].unwrap(), stop[l][p - 1][j].unwrap());
                    let d = change_stop[l][p - 1][j].unwrap();
                    let st = sid(line.route[j]);
                    for (sign, dir) in [(1.0, '+'), (-1.0, '-')] {
                        m.row(
                            format!("chg-stop[{},{},{},{}]", line.id, st, p + 1, dir),
                            vec![(cur, sign * sigma), (prev, -sign * sigma), (d, -1.0)],
                            Sense::Le,
                            0.0,
                        );
                    }
                    total.push((d, 1.0));
                }
                let d = change_freq[l][p - 1];
                for (fi, f) in line.frequencies.iter().enumerate() {
                    let (cur, prev) = (freq[l][p][fi], freq[l][p - 1][fi]);
                    for (sign, dir) in [(1.0, '+'), (-1.0, '-')] {
                        m.row(
                            format!("chg-freq[{},{},{},{}]", line.id, f, p + 1, dir),
                            vec![(cur, sign * sigma), (prev, -sign * sigma), (d, -1.0)],
                            Sense::Le,
                            0.0,
                        );
                    }
                }
                total.push((d, 1.0));
            }
        }
        total.push((slack.expect("slack exists with multi-period rows"), 1.0));
        m.row("max-change".to_string(), total, Sense::Eq, options.epsilon as f64);
    }

    MilpModel {
        variables: m.variables,
        constraints: m.constraints,
        epsilon: options.epsilon,
        mode: instance.mode,
        sigma,
        delta: instance.delta,
        options: options.clone(),
        flows: layout,
        stop,
        freq,
        change_stop,
        change_freq,
        slack,
        arc_ends: graph.arcs.iter().map(|a| (a.tail, a.head)).collect(),
        station_nodes: (0..ns).map(|s| (graph.in_node(s), graph.out_node(s))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cng::build_graph;
    use crate::fixtures::figure_instance;

    #[test]
    fn conservation_rows_per_origin_equal_node_count() {
        let inst = figure_instance(Mode::Asymmetric);
        let g = build_graph(&inst).unwrap();
        let m = build_model(&g, &inst, &ModelOptions::with_epsilon(0));
        let rows = m.constraints.iter().filter(|c| c.tag.starts_with("flowcons[Aa,")).count();
        assert_eq!(rows, 13);
        assert_eq!(m.flows.len(), 16 * 3);
        assert_eq!(m.constraints.iter().filter(|c| c.tag == "max-change").count(), 1);
    }

    #[test]
    fn symmetric_model_has_no_terminal_rows() {
        let inst = figure_instance(Mode::Symmetric);
        let g = build_graph(&inst).unwrap();
        let m = build_model(&g, &inst, &ModelOptions::with_epsilon(3));
        assert!(m.constraints.iter().all(|c| !c.tag.starts_with("terminal[")));
        assert_eq!(m.variables[m.slack.unwrap()].upper, 3.0);
    }

    #[test]
    fn drive_capacity_uses_seat_count_times_frequency() {
        let inst = figure_instance(Mode::Symmetric);
        let g = build_graph(&inst).unwrap();
        let m = build_model(&g, &inst, &ModelOptions::with_epsilon(0));
        let row = m.constraints.iter().find(|c| c.tag.starts_with("cap-drive[")).unwrap();
        let coeffs: Vec<f64> = row.terms.iter().filter(|(_, c)| *c < 0.0).map(|(_, c)| *c).collect();
        assert_eq!(coeffs, vec![-100.0, -200.0]);
        let skip = m.constraints.iter().find(|c| c.tag.starts_with("cap-skip[")).unwrap();
        assert_eq!(skip.rhs, 2.0 * 100.0 * 2.0);
    }

    #[test]
    fn tags_are_unique() {
        let inst = figure_instance(Mode::Symmetric);
        let g = build_graph(&inst).unwrap();
        let m = build_model(&g, &inst, &ModelOptions::with_epsilon(0));
        let mut tags: Vec<&str> = m.constraints.iter().map(|c| c.tag.as_str()).collect();
        tags.sort_unstable();
        let n = tags.len();
        tags.dedup();
        assert_eq!(tags.len(), n);
    }
}

//! Change-and-go graph.
//!
//! Each station gets an `In` and an `Out` node, transfer stations additionally
//! a `Change` node. Each line gets `Arrival`/`Departure` nodes along its route.
//! Passengers board through `In`/`ChIn` arcs (one per allowed frequency, so
//! the boarding cost can depend on the chosen frequency), ride along `Drive`
//! arcs, pass intermediate stations over either the `Stop` or the `Skip` arc,
//! and leave through `Out`/`ChOut`.
//!
//! In symmetric mode one line object stands for both directions: it has
//! arrival and departure nodes at every route position and drive arcs both
//! ways, while stop and skip arcs are shared by the two directions.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::instance::{ArcCostTable, CandidateLine, Mode, Period, ProblemInstance};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Arrival,
    Departure,
    In,
    Out,
    Change,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArcKind {
    Drive,
    Skip,
    Stop,
    In,
    Out,
    ChIn,
    ChOut,
}

impl ArcKind {
    pub const ALL: [ArcKind; 7] =
        [ArcKind::Drive, ArcKind::Skip, ArcKind::Stop, ArcKind::In, ArcKind::Out, ArcKind::ChIn, ArcKind::ChOut];

    pub fn name(self) -> &'static str {
        match self {
            ArcKind::Drive => "drive",
            ArcKind::Skip => "skip",
            ArcKind::Stop => "stop",
            ArcKind::In => "in",
            ArcKind::Out => "out",
            ArcKind::ChIn => "chin",
            ArcKind::ChOut => "chout",
        }
    }

    /// Boarding and alighting arcs, the ones that require the line to call.
    pub fn is_boarding(self) -> bool {
        matches!(self, ArcKind::In | ArcKind::Out | ArcKind::ChIn | ArcKind::ChOut)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CngNode {
    pub id: usize,
    pub kind: NodeKind,
    pub station: usize,
    /// Owning line for arrival/departure nodes.
    pub line: Option<usize>,
    /// Route position for arrival/departure nodes.
    pub position: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CngArc {
    pub id: usize,
    pub kind: ArcKind,
    pub tail: usize,
    pub head: usize,
    pub line: usize,
    /// Station the arc belongs to; `None` for drive arcs.
    pub station: Option<usize>,
    /// Route position of `station`, or of the tail for drive arcs.
    pub position: usize,
    /// Frequency served by an `In`/`ChIn` arc.
    pub frequency: Option<u32>,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct CngGraph {
    pub mode: Mode,
    pub nodes: Vec<CngNode>,
    pub arcs: Vec<CngArc>,
    in_node: Vec<usize>,
    out_node: Vec<usize>,
    change_node: Vec<Option<usize>>,
    by_kind: [Vec<usize>; 7],
    by_line: Vec<Vec<usize>>,
    by_line_station: HashMap<(ArcKind, usize, usize), Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
}

impl CngGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn in_node(&self, station: usize) -> usize {
        self.in_node[station]
    }

    pub fn out_node(&self, station: usize) -> usize {
        self.out_node[station]
    }

    pub fn change_node(&self, station: usize) -> Option<usize> {
        self.change_node[station]
    }

    pub fn arcs_of_kind(&self, kind: ArcKind) -> &[usize] {
        &self.by_kind[kind.slot()]
    }

    pub fn line_arcs(&self, line: usize) -> &[usize] {
        &self.by_line[line]
    }

    /// Arcs of `kind` that belong to `line` at `station`.
    pub fn line_station_arcs(&self, kind: ArcKind, line: usize, station: usize) -> &[usize] {
        self.by_line_station.get(&(kind, line, station)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }

    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    /// Arc count per kind, in [`ArcKind::ALL`] order.
    pub fn kind_counts(&self) -> [usize; 7] {
        let mut c = [0; 7];
        for (i, k) in ArcKind::ALL.iter().enumerate() {
            c[i] = self.arcs_of_kind(*k).len();
        }
        c
    }

    /// One line per arc: `kind tail head line station freq cost`.
    pub fn export_debug(&self, instance: &ProblemInstance) -> String {
        let mut out = String::new();
        for a in &self.arcs {
            let station = a.station.map(|s| instance.stations[s].id.as_str()).unwrap_or("-");
            let freq = a.frequency.map(|f| f.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {}",
                a.kind.name(),
                a.tail,
                a.head,
                instance.lines[a.line].id,
                station,
                freq,
                a.cost
            );
        }
        out
    }
}

/// Cost of an arc in minutes. Drive arcs take the section time from the
/// line; the remaining kinds read the table, which already includes the
/// acceleration and deceleration penalties.
pub fn arc_cost(
    kind: ArcKind,
    line: &CandidateLine,
    position: usize,
    frequency: Option<u32>,
    table: &ArcCostTable,
) -> Result<f64> {
    let need_freq = |k: &'static str| {
        frequency.ok_or_else(|| Error::Graph(format!("{k} arc of line `{}` has no frequency", line.id)))
    };
    match kind {
        ArcKind::Drive => line
            .section_times
            .get(position)
            .copied()
            .ok_or_else(|| Error::Graph(format!("line `{}` has no section at position {position}", line.id))),
        ArcKind::Skip => Ok(table.skip_cost),
        ArcKind::Stop => Ok(table.stop_cost),
        ArcKind::Out => Ok(table.out_cost),
        ArcKind::ChOut => Ok(table.out_change_cost),
        ArcKind::In => table.in_cost(need_freq("in")?),
        ArcKind::ChIn => table.in_change_cost(need_freq("in-change")?),
    }
}

/// Node supply for the commodity of passengers from `origin`: destination
/// demand at `Out` nodes, minus the row total at the origin's `In` node.
pub fn node_demand(graph: &CngGraph, origin: usize, period: &Period, node: usize) -> f64 {
    let n = &graph.nodes[node];
    match n.kind {
        NodeKind::Out => period.demand.get(origin, n.station),
        NodeKind::In if n.station == origin => -period.demand.row_total(origin),
        _ => 0.0,
    }
}

struct Builder {
    graph: CngGraph,
}

impl Builder {
    fn node(&mut self, kind: NodeKind, station: usize, line: Option<usize>, position: Option<usize>) -> usize {
        let id = self.graph.nodes.len();
        self.graph.nodes.push(CngNode { id, kind, station, line, position });
        self.graph.outgoing.push(Vec::new());
        self.graph.incoming.push(Vec::new());
        id
    }

    #[allow(clippy::too_many_arguments)]
    fn arc(
        &mut self,
        kind: ArcKind,
        tail: usize,
        head: usize,
        line: usize,
        station: Option<usize>,
        position: usize,
        frequency: Option<u32>,
        cost: f64,
    ) {
        let g = &mut self.graph;
        let id = g.arcs.len();
        g.arcs.push(CngArc { id, kind, tail, head, line, station, position, frequency, cost });
        g.by_kind[kind.slot()].push(id);
        g.by_line[line].push(id);
        if let Some(s) = station {
            g.by_line_station.entry((kind, line, s)).or_default().push(id);
        }
        g.outgoing[tail].push(id);
        g.incoming[head].push(id);
    }
}

/// Builds the change-and-go graph for the instance's mode. Node and arc ids
/// follow construction order: station nodes first, then per line its
/// arrival/departure nodes, then per line its arcs.
pub fn build_graph(instance: &ProblemInstance) -> Result<CngGraph> {
    let ns = instance.num_stations();
    let mut b = Builder {
        graph: CngGraph {
            mode: instance.mode,
            nodes: Vec::new(),
            arcs: Vec::new(),
            in_node: vec![0; ns],
            out_node: vec![0; ns],
            change_node: vec![None; ns],
            by_kind: Default::default(),
            by_line: vec![Vec::new(); instance.lines.len()],
            by_line_station: HashMap::new(),
            outgoing: Vec::new(),
            incoming: Vec::new(),
        },
    };
    for (s, st) in instance.stations.iter().enumerate() {
        b.graph.in_node[s] = b.node(NodeKind::In, s, None, None);
        b.graph.out_node[s] = b.node(NodeKind::Out, s, None, None);
        if st.is_transfer {
            b.graph.change_node[s] = Some(b.node(NodeKind::Change, s, None, None));
        }
    }

    let symmetric = instance.mode == Mode::Symmetric;
    // (arrival, departure) node per route position
    let mut line_nodes: Vec<Vec<(Option<usize>, Option<usize>)>> = Vec::with_capacity(instance.lines.len());
    for (l, line) in instance.lines.iter().enumerate() {
        let n = line.route.len();
        let mut pos_nodes = Vec::with_capacity(n);
        for (j, &s) in line.route.iter().enumerate() {
            if s >= ns {
                return Err(Error::Graph(format!("line `{}` refers to unknown station index {s}", line.id)));
            }
            let arr = (symmetric || j > 0).then(|| b.node(NodeKind::Arrival, s, Some(l), Some(j)));
            let dep = (symmetric || j + 1 < n).then(|| b.node(NodeKind::Departure, s, Some(l), Some(j)));
            pos_nodes.push((arr, dep));
        }
        line_nodes.push(pos_nodes);
    }

    let table = &instance.arc_costs;
    for (l, line) in instance.lines.iter().enumerate() {
        let n = line.route.len();
        let nodes = &line_nodes[l];
        for j in 0..n - 1 {
            let cost = arc_cost(ArcKind::Drive, line, j, None, table)?;
            b.arc(ArcKind::Drive, nodes[j].1.unwrap(), nodes[j + 1].0.unwrap(), l, None, j, None, cost);
        }
        if symmetric {
            for j in (0..n - 1).rev() {
                let cost = arc_cost(ArcKind::Drive, line, j, None, table)?;
                b.arc(ArcKind::Drive, nodes[j + 1].1.unwrap(), nodes[j].0.unwrap(), l, None, j + 1, None, cost);
            }
        }
        for (j, &s) in line.route.iter().enumerate() {
            let (arr, dep) = nodes[j];
            let st = Some(s);
            if j > 0 && j + 1 < n {
                let (a, d) = (arr.unwrap(), dep.unwrap());
                b.arc(ArcKind::Skip, a, d, l, st, j, None, arc_cost(ArcKind::Skip, line, j, None, table)?);
                b.arc(ArcKind::Stop, a, d, l, st, j, None, arc_cost(ArcKind::Stop, line, j, None, table)?);
            }
            let change = b.graph.change_node[s];
            if let Some(d) = dep {
                let in_node = b.graph.in_node[s];
                for &f in &line.frequencies {
                    let cost = arc_cost(ArcKind::In, line, j, Some(f), table)?;
                    b.arc(ArcKind::In, in_node, d, l, st, j, Some(f), cost);
                }
                if let Some(c) = change {
                    for &f in &line.frequencies {
                        let cost = arc_cost(ArcKind::ChIn, line, j, Some(f), table)?;
                        b.arc(ArcKind::ChIn, c, d, l, st, j, Some(f), cost);
                    }
                }
            }
            if let Some(a) = arr {
                let out_node = b.graph.out_node[s];
                b.arc(ArcKind::Out, a, out_node, l, st, j, None, arc_cost(ArcKind::Out, line, j, None, table)?);
                if let Some(c) = change {
                    b.arc(ArcKind::ChOut, a, c, l, st, j, None, arc_cost(ArcKind::ChOut, line, j, None, table)?);
                }
            }
        }
    }
    Ok(b.graph)
}

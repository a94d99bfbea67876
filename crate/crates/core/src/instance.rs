//! Problem data: stations, candidate lines, periods with OD demand, budgets and
//! the arc cost table, plus the instance file format.
//!
//! Instance files are TOML documents with top-level keys `mode`, `delta`,
//! `stations`, `sections`, `lines`, `periods` and `arc_costs`. Demand is stored
//! per period as sparse `[origin, destination, passengers_per_hour]` triples.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default objective slack coefficient.
pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(alias = "sym")]
    Symmetric,
    #[serde(alias = "asym")]
    Asymmetric,
}

impl Mode {
    /// Symmetry multiplier: 2 when every line runs in both directions.
    pub fn sigma(self) -> f64 {
        match self {
            Mode::Symmetric => 2.0,
            Mode::Asymmetric => 1.0,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Symmetric => f.write_str("symmetric"),
            Mode::Asymmetric => f.write_str("asymmetric"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym" | "symmetric" => Ok(Mode::Symmetric),
            "asym" | "asymmetric" => Ok(Mode::Asymmetric),
            other => Err(Error::Parse(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Station {
    pub id: String,
    pub name: String,
    pub is_terminal: bool,
    pub is_transfer: bool,
}

/// A track section between two adjacent stations. Sections are undirected.
#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub from: String,
    pub to: String,
    pub minutes: f64,
    pub km: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateLine {
    pub id: String,
    /// Station indices in travel order.
    pub route: Vec<usize>,
    /// Allowed frequencies in trains per hour, strictly ascending.
    pub frequencies: Vec<u32>,
    /// One-way length, used as the operating cost proxy.
    pub length_km: f64,
    /// Seats per train.
    pub capacity: u32,
    /// Driving minutes between consecutive route stations.
    pub section_times: Vec<f64>,
}

impl CandidateLine {
    pub fn max_frequency(&self) -> u32 {
        *self.frequencies.last().expect("validated lines have frequencies")
    }

    pub fn first_station(&self) -> usize {
        self.route[0]
    }

    pub fn last_station(&self) -> usize {
        *self.route.last().expect("validated lines have a route")
    }

    /// Route positions `1..n-1`, the stations that carry a stop decision.
    pub fn intermediate_positions(&self) -> std::ops::Range<usize> {
        1..self.route.len().saturating_sub(1).max(1)
    }

    pub fn num_intermediate(&self) -> usize {
        self.route.len().saturating_sub(2)
    }

    pub fn reversed_route(&self) -> Vec<usize> {
        self.route.iter().rev().copied().collect()
    }
}

/// Dense origin-destination matrix in passengers per hour.
#[derive(Clone, Debug, PartialEq)]
pub struct OdMatrix {
    n: usize,
    values: Vec<f64>,
}

impl OdMatrix {
    pub fn zeros(n: usize) -> Self {
        OdMatrix { n, values: vec![0.0; n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, origin: usize, destination: usize) -> f64 {
        self.values[origin * self.n + destination]
    }

    pub fn set(&mut self, origin: usize, destination: usize, value: f64) {
        self.values[origin * self.n + destination] = value;
    }

    pub fn row_total(&self, origin: usize) -> f64 {
        self.values[origin * self.n..(origin + 1) * self.n].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn transpose(&self) -> OdMatrix {
        let mut t = OdMatrix::zeros(self.n);
        for o in 0..self.n {
            for d in 0..self.n {
                t.set(d, o, self.get(o, d));
            }
        }
        t
    }

    /// Non-zero entries in row-major order.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(move |(i, v)| (i / self.n, i % self.n, *v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Period {
    /// 1-based position in the day.
    pub index: usize,
    pub name: String,
    pub length_hours: f64,
    /// Train-kilometres per hour.
    pub budget: f64,
    pub demand: OdMatrix,
}

/// Arc costs in generalised journey time minutes. Boarding and alighting
/// values already include the acceleration and deceleration penalties.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcCostTable {
    pub in_cost: BTreeMap<u32, f64>,
    pub in_change_cost: BTreeMap<u32, f64>,
    pub out_cost: f64,
    pub out_change_cost: f64,
    pub stop_cost: f64,
    pub skip_cost: f64,
}

impl ArcCostTable {
    /// Assembles a table from perceived waiting times and train dynamics:
    /// boarding arcs get the acceleration penalty, alighting arcs the
    /// deceleration penalty, and a stop costs dwell plus both.
    pub fn from_components(
        entry_wait: &BTreeMap<u32, f64>,
        transfer_wait: &BTreeMap<u32, f64>,
        dwell: f64,
        accel_penalty: f64,
        decel_penalty: f64,
    ) -> Self {
        ArcCostTable {
            in_cost: entry_wait.iter().map(|(f, w)| (*f, w + accel_penalty)).collect(),
            in_change_cost: transfer_wait.iter().map(|(f, w)| (*f, w + accel_penalty)).collect(),
            out_cost: decel_penalty,
            out_change_cost: decel_penalty,
            stop_cost: dwell + accel_penalty + decel_penalty,
            skip_cost: 0.0,
        }
    }

    pub fn in_cost(&self, frequency: u32) -> Result<f64> {
        self.in_cost
            .get(&frequency)
            .copied()
            .ok_or(Error::MissingArcCost { kind: "in", frequency })
    }

    pub fn in_change_cost(&self, frequency: u32) -> Result<f64> {
        self.in_change_cost
            .get(&frequency)
            .copied()
            .ok_or(Error::MissingArcCost { kind: "in_change", frequency })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    pub stations: Vec<Station>,
    pub sections: Vec<Section>,
    pub lines: Vec<CandidateLine>,
    pub periods: Vec<Period>,
    pub arc_costs: ArcCostTable,
    pub mode: Mode,
    pub delta: f64,
    station_index: HashMap<String, usize>,
}

impl ProblemInstance {
    /// Assembles an instance from parts and validates it. Line routes refer to
    /// station ids; section times and, when `length_km` is `None`, lengths are
    /// derived from `sections`.
    pub fn new(
        stations: Vec<Station>,
        sections: Vec<Section>,
        lines: Vec<LineSpec>,
        periods: Vec<PeriodSpec>,
        arc_costs: ArcCostTable,
        mode: Mode,
        delta: f64,
    ) -> Result<Self> {
        let raw = RawInstance {
            mode,
            delta,
            stations: stations
                .into_iter()
                .map(|s| RawStation { id: s.id, name: Some(s.name), terminal: s.is_terminal, transfer: s.is_transfer })
                .collect(),
            sections: sections
                .into_iter()
                .map(|s| RawSection { from: s.from, to: s.to, minutes: s.minutes, km: s.km })
                .collect(),
            lines: lines
                .into_iter()
                .map(|l| RawLine {
                    id: l.id,
                    route: l.route,
                    frequencies: l.frequencies,
                    capacity: l.capacity,
                    length_km: l.length_km,
                })
                .collect(),
            periods: periods
                .into_iter()
                .map(|p| RawPeriod { name: p.name, length_hours: p.length_hours, budget: p.budget, demand: p.demand })
                .collect(),
            arc_costs: RawArcCosts::from_table(&arc_costs),
        };
        Self::from_raw(raw)
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.station_index.get(id).copied()
    }

    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn sigma(&self) -> f64 {
        self.mode.sigma()
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    /// Lines whose first station is `station` (only meaningful for terminals).
    pub fn lines_leaving(&self, station: usize) -> Vec<usize> {
        (0..self.lines.len()).filter(|&l| self.lines[l].first_station() == station).collect()
    }

    /// Lines whose last station is `station`.
    pub fn lines_entering(&self, station: usize) -> Vec<usize> {
        (0..self.lines.len()).filter(|&l| self.lines[l].last_station() == station).collect()
    }

    /// Index of the line running the exact reverse route, if any.
    pub fn reverse_partner(&self, line: usize) -> Option<usize> {
        let rev = self.lines[line].reversed_route();
        (0..self.lines.len()).find(|&k| k != line && self.lines[k].route == rev)
    }

    /// Every frequency used by any line, ascending.
    pub fn all_frequencies(&self) -> Vec<u32> {
        let mut fs: Vec<u32> = self.lines.iter().flat_map(|l| l.frequencies.iter().copied()).collect();
        fs.sort_unstable();
        fs.dedup();
        fs
    }

    /// Returns a copy in the requested mode: mirroring one-directional lines
    /// when switching to asymmetric, dropping the reverse copies otherwise.
    pub fn with_mode(&self, mode: Mode) -> Result<ProblemInstance> {
        match (self.mode, mode) {
            (a, b) if a == b => Ok(self.clone()),
            (Mode::Symmetric, Mode::Asymmetric) => mirror_lines(self),
            _ => {
                let mut keep = Vec::new();
                let mut dropped = HashSet::new();
                for l in 0..self.lines.len() {
                    if dropped.contains(&l) {
                        continue;
                    }
                    if let Some(r) = self.reverse_partner(l) {
                        dropped.insert(r);
                    }
                    keep.push(self.lines[l].clone());
                }
                let mut out = self.clone();
                out.lines = keep;
                out.mode = Mode::Symmetric;
                out.validate()?;
                Ok(out)
            }
        }
    }

    /// Parses and validates an instance document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Parse("empty instance document".into()));
        }
        let raw: RawInstance = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_raw()).expect("instance serialization cannot fail")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    fn from_raw(raw: RawInstance) -> Result<Self> {
        let mut station_index = HashMap::new();
        let mut stations = Vec::with_capacity(raw.stations.len());
        for s in raw.stations {
            if s.id.is_empty() {
                return Err(Error::Validation("station with empty id".into()));
            }
            if station_index.insert(s.id.clone(), stations.len()).is_some() {
                return Err(Error::Validation(format!("duplicate station id `{}`", s.id)));
            }
            stations.push(Station {
                name: s.name.unwrap_or_else(|| s.id.clone()),
                id: s.id,
                is_terminal: s.terminal,
                is_transfer: s.transfer,
            });
        }
        let lookup = |id: &str, ctx: &str| -> Result<usize> {
            station_index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Validation(format!("{ctx}: unknown station `{id}`")))
        };

        let mut section_map: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
        let mut sections = Vec::with_capacity(raw.sections.len());
        for s in raw.sections {
            let a = lookup(&s.from, "section")?;
            let b = lookup(&s.to, "section")?;
            if a == b {
                return Err(Error::Validation(format!("section `{}`-`{}` is a self loop", s.from, s.to)));
            }
            if !(s.minutes.is_finite() && s.minutes >= 0.0 && s.km.is_finite() && s.km >= 0.0) {
                return Err(Error::Validation(format!("section `{}`-`{}` has invalid minutes/km", s.from, s.to)));
            }
            let key = (a.min(b), a.max(b));
            if section_map.insert(key, (s.minutes, s.km)).is_some() {
                return Err(Error::Validation(format!("duplicate section `{}`-`{}`", s.from, s.to)));
            }
            sections.push(Section { from: s.from, to: s.to, minutes: s.minutes, km: s.km });
        }

        let mut lines = Vec::with_capacity(raw.lines.len());
        let mut line_ids = HashSet::new();
        for l in raw.lines {
            if !line_ids.insert(l.id.clone()) {
                return Err(Error::Validation(format!("duplicate line id `{}`", l.id)));
            }
            let ctx = format!("line `{}`", l.id);
            let route = l.route.iter().map(|s| lookup(s, &ctx)).collect::<Result<Vec<_>>>()?;
            if route.len() < 2 {
                return Err(Error::Validation(format!("{ctx}: route needs at least two stations")));
            }
            if route.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Validation(format!("{ctx}: route repeats a station immediately")));
            }
            let mut seen = HashSet::new();
            if !route.iter().all(|s| seen.insert(*s)) {
                return Err(Error::Validation(format!("{ctx}: route visits a station twice")));
            }
            let mut section_times = Vec::with_capacity(route.len() - 1);
            let mut km = 0.0;
            for w in route.windows(2) {
                let key = (w[0].min(w[1]), w[0].max(w[1]));
                let (minutes, sec_km) = section_map.get(&key).copied().ok_or_else(|| {
                    Error::Validation(format!(
                        "{ctx}: no section between `{}` and `{}`",
                        stations[w[0]].id, stations[w[1]].id
                    ))
                })?;
                section_times.push(minutes);
                km += sec_km;
            }
            for end in [route[0], route[route.len() - 1]] {
                if !stations[end].is_terminal {
                    return Err(Error::Validation(format!(
                        "{ctx}: route endpoint `{}` is not a terminal station",
                        stations[end].id
                    )));
                }
            }
            if l.frequencies.is_empty() {
                return Err(Error::Validation(format!("{ctx}: no allowed frequencies")));
            }
            if l.frequencies[0] == 0 || l.frequencies.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!(
                    "{ctx}: frequencies must be positive and strictly ascending"
                )));
            }
            if l.capacity == 0 {
                return Err(Error::Validation(format!("{ctx}: capacity must be positive")));
            }
            let length_km = l.length_km.unwrap_or(km);
            if !(length_km.is_finite() && length_km >= 0.0) {
                return Err(Error::Validation(format!("{ctx}: invalid length")));
            }
            lines.push(CandidateLine {
                id: l.id,
                route,
                frequencies: l.frequencies,
                length_km,
                capacity: l.capacity,
                section_times,
            });
        }

        let n = stations.len();
        if raw.periods.is_empty() {
            return Err(Error::Validation("instance has no periods".into()));
        }
        let mut periods = Vec::with_capacity(raw.periods.len());
        for (i, p) in raw.periods.into_iter().enumerate() {
            let index = i + 1;
            if !(p.length_hours.is_finite() && p.length_hours > 0.0) {
                return Err(Error::Validation(format!("period {index}: length must be positive")));
            }
            if !(p.budget.is_finite() && p.budget >= 0.0) {
                return Err(Error::Validation(format!("period {index}: budget must be non-negative")));
            }
            let mut demand = OdMatrix::zeros(n);
            for (o, d, v) in p.demand {
                let ctx = format!("period {index} demand");
                let oi = lookup(&o, &ctx)?;
                let di = lookup(&d, &ctx)?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Validation(format!("{ctx}: negative demand {o}->{d}")));
                }
                if oi == di && v != 0.0 {
                    return Err(Error::Validation(format!("{ctx}: non-zero diagonal entry at `{o}`")));
                }
                demand.set(oi, di, demand.get(oi, di) + v);
            }
            periods.push(Period {
                index,
                name: p.name.unwrap_or_else(|| format!("P{index}")),
                length_hours: p.length_hours,
                budget: p.budget,
                demand,
            });
        }

        let arc_costs = raw.arc_costs.into_table()?;
        let instance = ProblemInstance {
            stations,
            sections,
            lines,
            periods,
            arc_costs,
            mode: raw.mode,
            delta: raw.delta,
            station_index,
        };
        instance.validate()?;
        Ok(instance)
    }

    /// Checks the cross-cutting invariants (terminals, costs, demand coverage,
    /// mode pairing).
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::Validation("delta must be a non-negative number".into()));
        }
        let mut endpoints = vec![false; self.stations.len()];
        let mut on_route = vec![false; self.stations.len()];
        for l in &self.lines {
            endpoints[l.first_station()] = true;
            endpoints[l.last_station()] = true;
            for &s in &l.route {
                on_route[s] = true;
            }
        }
        if !self.lines.is_empty() {
            for (s, st) in self.stations.iter().enumerate() {
                if st.is_terminal && !endpoints[s] {
                    return Err(Error::Validation(format!(
                        "terminal station `{}` is not the endpoint of any candidate line",
                        st.id
                    )));
                }
            }
        }
        for f in self.all_frequencies() {
            self.arc_costs.in_cost(f).map_err(|e| Error::Validation(e.to_string()))?;
            self.arc_costs.in_change_cost(f).map_err(|e| Error::Validation(e.to_string()))?;
        }
        let in_costs: Vec<f64> = self.arc_costs.in_cost.values().copied().collect();
        if in_costs.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Validation("in_cost must be strictly decreasing in frequency".into()));
        }
        for p in &self.periods {
            for (o, d, _) in p.demand.nonzeros() {
                for s in [o, d] {
                    if !on_route[s] {
                        return Err(Error::Validation(format!(
                            "period {}: station `{}` has demand but lies on no line route",
                            p.index, self.stations[s].id
                        )));
                    }
                }
            }
        }
        match self.mode {
            Mode::Symmetric => {
                for l in 0..self.lines.len() {
                    if let Some(r) = self.reverse_partner(l) {
                        return Err(Error::Validation(format!(
                            "symmetric mode: line `{}` is the reverse of `{}`",
                            self.lines[r].id, self.lines[l].id
                        )));
                    }
                }
            }
            Mode::Asymmetric => {
                for (l, line) in self.lines.iter().enumerate() {
                    let rev = line.reversed_route();
                    let partners: Vec<usize> = (0..self.lines.len())
                        .filter(|&k| k != l && self.lines[k].route == rev)
                        .collect();
                    let [k] = partners[..] else {
                        return Err(Error::Validation(format!(
                            "asymmetric mode: line `{}` needs exactly one reverse line, found {}",
                            line.id,
                            partners.len()
                        )));
                    };
                    let other = &self.lines[k];
                    if other.frequencies != line.frequencies
                        || other.length_km != line.length_km
                        || other.capacity != line.capacity
                    {
                        return Err(Error::Validation(format!(
                            "asymmetric mode: line `{}` and its reverse `{}` differ in frequencies, length or capacity",
                            line.id, other.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn to_raw(&self) -> RawInstance {
        RawInstance {
            mode: self.mode,
            delta: self.delta,
            stations: self
                .stations
                .iter()
                .map(|s| RawStation {
                    id: s.id.clone(),
                    name: Some(s.name.clone()),
                    terminal: s.is_terminal,
                    transfer: s.is_transfer,
                })
                .collect(),
            sections: self
                .sections
                .iter()
                .map(|s| RawSection { from: s.from.clone(), to: s.to.clone(), minutes: s.minutes, km: s.km })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| RawLine {
                    id: l.id.clone(),
                    route: l.route.iter().map(|&s| self.stations[s].id.clone()).collect(),
                    frequencies: l.frequencies.clone(),
                    capacity: l.capacity,
                    length_km: Some(l.length_km),
                })
                .collect(),
            periods: self
                .periods
                .iter()
                .map(|p| RawPeriod {
                    name: Some(p.name.clone()),
                    length_hours: p.length_hours,
                    budget: p.budget,
                    demand: p
                        .demand
                        .nonzeros()
                        .map(|(o, d, v)| (self.stations[o].id.clone(), self.stations[d].id.clone(), v))
                        .collect(),
                })
                .collect(),
            arc_costs: RawArcCosts::from_table(&self.arc_costs),
        }
    }
}

/// Line description used by [`ProblemInstance::new`].
#[derive(Clone, Debug)]
pub struct LineSpec {
    pub id: String,
    pub route: Vec<String>,
    pub frequencies: Vec<u32>,
    pub capacity: u32,
    pub length_km: Option<f64>,
}

/// Period description used by [`ProblemInstance::new`].
#[derive(Clone, Debug)]
pub struct PeriodSpec {
    pub name: Option<String>,
    pub length_hours: f64,
    pub budget: f64,
    pub demand: Vec<(String, String, f64)>,
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ProblemInstance::from_toml_str(&text)
}

/// Adds a reversed copy of every line and switches the instance to
/// asymmetric mode. A line `A-B` whose id names its endpoints gets the
/// reverse id `B-A`; other ids get a `~rev` suffix.
pub fn mirror_lines(instance: &ProblemInstance) -> Result<ProblemInstance> {
    for l in 0..instance.lines.len() {
        if let Some(r) = instance.reverse_partner(l) {
            return Err(Error::Validation(format!(
                "cannot mirror: line `{}` already has reverse `{}`",
                instance.lines[l].id, instance.lines[r].id
            )));
        }
    }
    let mut ids: HashSet<String> = instance.lines.iter().map(|l| l.id.clone()).collect();
    let mut mirrored = Vec::with_capacity(instance.lines.len());
    for line in &instance.lines {
        let first = &instance.stations[line.first_station()].id;
        let last = &instance.stations[line.last_station()].id;
        let id = if line.id == format!("{first}-{last}") {
            format!("{last}-{first}")
        } else {
            format!("{}~rev", line.id)
        };
        if !ids.insert(id.clone()) {
            return Err(Error::Validation(format!("cannot mirror: reverse id `{id}` already in use")));
        }
        mirrored.push(CandidateLine {
            id,
            route: line.reversed_route(),
            frequencies: line.frequencies.clone(),
            length_km: line.length_km,
            capacity: line.capacity,
            section_times: line.section_times.iter().rev().copied().collect(),
        });
    }
    let mut out = instance.clone();
    out.lines.extend(mirrored);
    out.mode = Mode::Asymmetric;
    out.validate()?;
    Ok(out)
}

/// Parameters of the synthetic demand generator.
#[derive(Clone, Debug)]
pub struct DemandSynth {
    pub seed: u64,
    /// Ratio of each peak period's total to the off-peak total.
    pub peak_factor: f64,
    /// 0 gives symmetric peaks; 1 gives the strongest morning/afternoon skew.
    pub directionality: f64,
    /// Approximate off-peak passengers per hour leaving the average station.
    pub scale: f64,
}

impl Default for DemandSynth {
    fn default() -> Self {
        DemandSynth { seed: 0, peak_factor: 2.0, directionality: 0.5, scale: 150.0 }
    }
}

pub fn synth_demand(instance: &ProblemInstance, seed: u64, peak_factor: f64, directionality: f64) -> Result<ProblemInstance> {
    synth_demand_with(instance, &DemandSynth { seed, peak_factor, directionality, ..DemandSynth::default() })
}

/// Fills every period with gravity-model demand between stations served by
/// some line. With more than one period the first is the morning peak, the
/// last the afternoon peak and the rest off-peak. The afternoon matrix is the
/// transpose of the morning one, so the directional skew is opposed.
pub fn synth_demand_with(instance: &ProblemInstance, cfg: &DemandSynth) -> Result<ProblemInstance> {
    if !(cfg.peak_factor >= 1.0) {
        return Err(Error::Validation("peak_factor must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.directionality) {
        return Err(Error::Validation("directionality must lie in [0, 1]".into()));
    }
    let n = instance.num_stations();
    let mut served = vec![false; n];
    for l in &instance.lines {
        for &s in &l.route {
            served[s] = true;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weight = vec![0.0; n];
    let mut attraction = vec![0.0; n];
    for s in 0..n {
        let w: f64 = rng.random_range(0.3..1.0);
        let a: f64 = rng.random_range(-1.0..1.0);
        let st = &instance.stations[s];
        let mult = if st.is_terminal { 3.0 } else { 1.0 } * if st.is_transfer { 2.0 } else { 1.0 };
        if served[s] {
            weight[s] = w * mult;
            attraction[s] = a;
        }
    }
    let total_weight: f64 = weight.iter().sum();
    let served_count = served.iter().filter(|s| **s).count().max(1) as f64;

    let round = |v: f64| (v * 100.0).round() / 100.0;
    let mut offpeak = OdMatrix::zeros(n);
    if total_weight > 0.0 {
        let k = cfg.scale * served_count / total_weight;
        for o in 0..n {
            for d in 0..n {
                if o != d {
                    offpeak.set(o, d, round(k * weight[o] * weight[d] / total_weight));
                }
            }
        }
    }
    let mut morning = OdMatrix::zeros(n);
    for o in 0..n {
        for d in 0..n {
            let skew = 1.0 + cfg.directionality * (attraction[d] - attraction[o]) / 2.0;
            morning.set(o, d, offpeak.get(o, d) * skew);
        }
    }
    let raw_total = morning.total();
    if raw_total > 0.0 {
        let scale = cfg.peak_factor * offpeak.total() / raw_total;
        for o in 0..n {
            for d in 0..n {
                morning.set(o, d, round(morning.get(o, d) * scale));
            }
        }
    }
    let afternoon = morning.transpose();

    let mut out = instance.clone();
    let np = out.periods.len();
    for (i, p) in out.periods.iter_mut().enumerate() {
        p.demand = if np == 1 {
            offpeak.clone()
        } else if i == 0 {
            morning.clone()
        } else if i == np - 1 {
            afternoon.clone()
        } else {
            offpeak.clone()
        };
    }
    out.validate()?;
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    #[serde(default = "default_mode")]
    mode: Mode,
    #[serde(default = "default_delta")]
    delta: f64,
    stations: Vec<RawStation>,
    #[serde(default)]
    sections: Vec<RawSection>,
    #[serde(default)]
    lines: Vec<RawLine>,
    periods: Vec<RawPeriod>,
    arc_costs: RawArcCosts,
}

fn default_mode() -> Mode {
    Mode::Symmetric
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Serialize, Deserialize)]
struct RawStation {
    id: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    terminal: bool,
    #[serde(default)]
    transfer: bool,
}

#[derive(Serialize, Deserialize)]
struct RawSection {
    from: String,
    to: String,
    minutes: f64,
    #[serde(default)]
    km: f64,
}

#[derive(Serialize, Deserialize)]
struct RawLine {
    id: String,
    route: Vec<String>,
    frequencies: Vec<u32>,
    capacity: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_km: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPeriod {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    length_hours: f64,
    budget: f64,
    #[serde(default)]
    demand: Vec<(String, String, f64)>,
}

#[derive(Serialize, Deserialize)]
struct RawArcCosts {
    #[serde(rename = "in")]
    in_cost: BTreeMap<String, f64>,
    in_change: BTreeMap<String, f64>,
    out: f64,
    out_change: f64,
    stop: f64,
    #[serde(default)]
    skip: f64,
}

impl RawArcCosts {
    fn from_table(t: &ArcCostTable) -> Self {
        let keyed = |m: &BTreeMap<u32, f64>| m.iter().map(|(f, c)| (format!("F{f}"), *c)).collect();
        RawArcCosts {
            in_cost: keyed(&t.in_cost),
            in_change: keyed(&t.in_change_cost),
            out: t.out_cost,
            out_change: t.out_change_cost,
            stop: t.stop_cost,
            skip: t.skip_cost,
        }
    }

    fn into_table(self) -> Result<ArcCostTable> {
        fn parse(m: BTreeMap<String, f64>, kind: &str) -> Result<BTreeMap<u32, f64>> {
            m.into_iter()
                .map(|(k, v)| {
                    let f = k
                        .strip_prefix('F')
                        .and_then(|n| n.parse::<u32>().ok())
                        .filter(|f| *f > 0)
                        .ok_or_else(|| Error::Parse(format!("arc_costs.{kind}: bad frequency key `{k}`")))?;
                    Ok((f, v))
                })
                .collect()
        }
        Ok(ArcCostTable {
            in_cost: parse(self.in_cost, "in")?,
            in_change_cost: parse(self.in_change, "in_change")?,
            out_cost: self.out,
            out_change_cost: self.out_change,
            stop_cost: self.stop,
            skip_cost: self.skip,
        })
    }
}

//! Adjustment counting and the epsilon-constraint frontier between
//! generalised journey time and the number of line-plan adjustments.
//!
//! The default loop starts at the largest possible adjustment count and,
//! after each solve with `c` realised adjustments, continues at `c - 1`
//! (the slack reward makes every solve return the fewest adjustments among
//! its optimal plans, so the values in between would repeat the point). It
//! stops at the first infeasible limit. With an explicit list every limit is
//! solved independently.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::cng::{build_graph, CngGraph};
use crate::evaluate::LinePlan;
use crate::instance::ProblemInstance;
use crate::milp::{build_model, MilpModel, ModelOptions};
use crate::solve::{solve_with, Solution, SolveLimits, SolveStatus};
use crate::{Error, Result};

/// Largest number of adjustments any plan can make: every line switches
/// frequency and toggles every intermediate stop at every transition.
pub fn max_adjustments(instance: &ProblemInstance) -> u32 {
    let transitions = instance.periods.len().saturating_sub(1) as u32;
    let per_line: u32 = instance.lines.iter().map(|l| l.num_intermediate() as u32 + 1).sum();
    instance.sigma() as u32 * transitions * per_line
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct AdjustmentCount {
    pub frequency: u32,
    pub stop: u32,
}

impl AdjustmentCount {
    pub fn total(&self) -> u32 {
        self.frequency + self.stop
    }
}

/// Counts the adjustments of a solution from its binaries and checks them
/// against the model's change variables.
pub fn count_adjustments(model: &MilpModel, instance: &ProblemInstance, values: &[f64]) -> Result<AdjustmentCount> {
    let plan = LinePlan::from_values(model, instance, values);
    let (frequency, stop) = plan.change_counts(instance);
    let freq_vars: f64 = model.change_freq.iter().flatten().map(|v| values[*v]).sum();
    let stop_vars: f64 = model.change_stop.iter().flatten().flatten().flatten().map(|v| values[*v]).sum();
    if (freq_vars - frequency as f64).abs() > 1e-6 || (stop_vars - stop as f64).abs() > 1e-6 {
        return Err(Error::Inconsistent(format!(
            "plan has {frequency} frequency and {stop} stop adjustments, change variables sum to {freq_vars} and {stop_vars}"
        )));
    }
    Ok(AdjustmentCount { frequency, stop })
}

#[derive(Clone, Debug, Default)]
pub struct FrontierOptions {
    /// Adjustment limits to solve. `None` runs the descending loop.
    pub epsilons: Option<Vec<u32>>,
    /// First limit of the descending loop; defaults to [`max_adjustments`].
    pub start: Option<u32>,
    /// Limits applied to every single solve.
    pub limits: SolveLimits,
    /// Wall-clock budget for the whole frontier, in seconds.
    pub total_time: Option<f64>,
    /// Worker threads for explicit lists. With one thread the list is solved
    /// in order and each solve is seeded with the best earlier plan that
    /// fits its limit.
    pub threads: Option<usize>,
    pub pair_directions: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PointStatus {
    Solved(SolveStatus),
    /// The solve returned an error; the loop carried on.
    Failed(String),
    /// Not attempted because the total time budget ran out.
    Skipped,
}

impl PointStatus {
    pub fn label(&self) -> String {
        match self {
            PointStatus::Solved(s) => s.as_str().to_string(),
            PointStatus::Failed(msg) => format!("failed: {msg}"),
            PointStatus::Skipped => "skipped".to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParetoPoint {
    pub epsilon: u32,
    pub status: PointStatus,
    /// Present when a feasible plan was found.
    pub adjustments: Option<AdjustmentCount>,
    pub gjt: f64,
    pub objective: f64,
    pub gap: f64,
    pub wall_time: f64,
    pub plan: Option<LinePlan>,
    pub values: Vec<f64>,
}

impl ParetoPoint {
    pub fn is_feasible(&self) -> bool {
        self.adjustments.is_some()
    }

    pub fn total_adjustments(&self) -> Option<u32> {
        self.adjustments.map(|a| a.total())
    }

    fn unsolved(epsilon: u32, status: PointStatus) -> ParetoPoint {
        ParetoPoint {
            epsilon,
            status,
            adjustments: None,
            gjt: f64::NAN,
            objective: f64::NAN,
            gap: f64::NAN,
            wall_time: 0.0,
            plan: None,
            values: Vec::new(),
        }
    }
}

/// Every solved limit, in the order the limits were given or visited.
#[derive(Clone, Debug, Default)]
pub struct ParetoSet {
    pub points: Vec<ParetoPoint>,
}

pub const CSV_HEADER: &str = "epsilon,total_adj,freq_adj,stop_adj,gjt_min,gap,status";

impl ParetoSet {
    /// Non-dominated feasible points by ascending adjustment count. Points
    /// with equal counts and journey times keep the one with the smallest
    /// limit.
    pub fn frontier(&self) -> Vec<&ParetoPoint> {
        let mut feasible: Vec<&ParetoPoint> = self.points.iter().filter(|p| p.is_feasible()).collect();
        feasible.sort_by(|a, b| {
            a.total_adjustments()
                .cmp(&b.total_adjustments())
                .then(a.gjt.total_cmp(&b.gjt))
                .then(a.epsilon.cmp(&b.epsilon))
        });
        let mut out: Vec<&ParetoPoint> = Vec::new();
        for p in feasible {
            let dominated = out.iter().any(|q| {
                let tol = 1e-9 * q.gjt.abs().max(1.0);
                q.gjt <= p.gjt + tol
            });
            if !dominated {
                out.push(p);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        csv(self.points.iter())
    }

    pub fn frontier_csv(&self) -> String {
        csv(self.frontier().into_iter())
    }

    pub fn plans(&self) -> Vec<LinePlan> {
        self.frontier().iter().filter_map(|p| p.plan.clone()).collect()
    }
}

fn csv<'a>(points: impl Iterator<Item = &'a ParetoPoint>) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for p in points {
        match p.adjustments {
            Some(a) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.6},{:.6},{}",
                    p.epsilon,
                    a.total(),
                    a.frequency,
                    a.stop,
                    p.gjt,
                    p.gap,
                    p.status.label()
                );
            }
            None => {
                let _ = writeln!(out, "{},,,,,,{}", p.epsilon, p.status.label());
            }
        }
    }
    out
}

struct Runner<'a> {
    instance: &'a ProblemInstance,
    graph: CngGraph,
    options: &'a FrontierOptions,
    deadline: Option<Instant>,
}

impl Runner<'_> {
    fn limits(&self) -> Option<SolveLimits> {
        let mut limits = self.options.limits.clone();
        if let Some(d) = self.deadline {
            let left = d.saturating_duration_since(Instant::now());
            if left == Duration::ZERO {
                return None;
            }
            let left = left.as_secs_f64();
            limits.time_limit = Some(limits.time_limit.map_or(left, |t| t.min(left)));
        }
        Some(limits)
    }

    fn model(&self, epsilon: u32) -> MilpModel {
        let options = ModelOptions { epsilon, multi_period: true, pair_directions: self.options.pair_directions };
        build_model(&self.graph, self.instance, &options)
    }

    fn solve_point(&self, epsilon: u32, warm: Option<&LinePlan>) -> ParetoPoint {
        let Some(limits) = self.limits() else {
            return ParetoPoint::unsolved(epsilon, PointStatus::Skipped);
        };
        let model = self.model(epsilon);
        let seed = warm.map(|p| p.to_values(&model, self.instance));
        let solved = solve_with(&model, &limits, seed.as_deref()).and_then(|s| self.point(&model, epsilon, s));
        match solved {
            Ok(p) => p,
            Err(e) => {
                log::warn!("epsilon {epsilon}: {e}");
                ParetoPoint::unsolved(epsilon, PointStatus::Failed(e.to_string()))
            }
        }
    }

    fn point(&self, model: &MilpModel, epsilon: u32, s: Solution) -> Result<ParetoPoint> {
        let mut p = ParetoPoint::unsolved(epsilon, PointStatus::Solved(s.status));
        p.wall_time = s.wall_time;
        if s.status == SolveStatus::Infeasible {
            return Ok(p);
        }
        p.adjustments = Some(count_adjustments(model, self.instance, &s.values)?);
        p.plan = Some(LinePlan::from_values(model, self.instance, &s.values));
        p.gjt = s.gjt;
        p.objective = s.objective;
        p.gap = s.gap;
        p.values = s.values;
        Ok(p)
    }
}

/// Traces the frontier. Errors only when the instance itself is unusable;
/// failures of single solves are recorded in their points.
pub fn run_frontier(instance: &ProblemInstance, options: &FrontierOptions) -> Result<ParetoSet> {
    let start = Instant::now();
    let runner = Runner {
        instance,
        graph: build_graph(instance)?,
        options,
        deadline: options.total_time.map(|t| start + Duration::from_secs_f64(t.max(0.0))),
    };
    let points = match &options.epsilons {
        None => descending(&runner, options.start.unwrap_or_else(|| max_adjustments(instance))),
        Some(list) if options.threads.unwrap_or(0) == 1 => sequential(&runner, list),
        Some(list) => {
            let run = || list.par_iter().map(|e| runner.solve_point(*e, None)).collect::<Vec<_>>();
            match options.threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Validation(format!("thread pool: {e}")))?
                    .install(run),
                None => run(),
            }
        }
    };
    Ok(ParetoSet { points })
}

fn descending(runner: &Runner, first: u32) -> Vec<ParetoPoint> {
    let mut points = Vec::new();
    let mut epsilon = Some(first);
    while let Some(e) = epsilon {
        let p = runner.solve_point(e, None);
        log::info!("epsilon {e}: {} gjt {}", p.status.label(), p.gjt);
        epsilon = match (&p.status, p.total_adjustments()) {
            (PointStatus::Solved(SolveStatus::Infeasible) | PointStatus::Skipped, _) => None,
            (_, Some(c)) => c.min(e).checked_sub(1),
            (_, None) => e.checked_sub(1),
        };
        points.push(p);
    }
    points
}

fn sequential(runner: &Runner, list: &[u32]) -> Vec<ParetoPoint> {
    let mut points: Vec<ParetoPoint> = Vec::with_capacity(list.len());
    for &e in list {
        // a plan with at most `e` adjustments stays feasible under limit `e`
        let warm = points
            .iter()
            .filter(|p| p.total_adjustments().is_some_and(|c| c <= e))
            .min_by(|a, b| a.gjt.total_cmp(&b.gjt))
            .and_then(|p| p.plan.as_ref());
        let p = runner.solve_point(e, warm);
        log::info!("epsilon {e}: {} gjt {}", p.status.label(), p.gjt);
        points.push(p);
    }
    points
}

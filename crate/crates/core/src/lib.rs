//! Multi-period railway line planning.
//!
//! The crate builds a change-and-go passenger network over a pool of candidate
//! lines, assembles the multi-period line planning MILP on top of it (stopping
//! patterns, frequencies, passenger flows, transfer penalties and adjustment
//! counting between consecutive periods), solves it with an LP-based
//! branch-and-bound, and traces the trade-off between generalised journey time
//! and the number of line-plan adjustments with an epsilon-constraint loop.
//!
//! Module map:
//!
//! * [`instance`]: problem data, instance files, line mirroring, synthetic demand
//! * [`cng`]: change-and-go graph construction and arc costs
//! * [`milp`]: model assembly (variables, constraint families, objective)
//! * [`solve`]: LP relaxation, branch-and-bound, MPS export and solution import
//! * [`pareto`]: adjustment counting and frontier generation
//! * [`evaluate`]: fixed-plan assignment, brute-force oracle, plan diffs, reports

pub mod cng;
pub mod evaluate;
pub mod fixtures;
pub mod instance;
pub mod milp;
pub mod pareto;
pub mod solve;

mod error;

pub use error::{Error, Result};

pub use cng::{build_graph, ArcKind, CngArc, CngGraph, CngNode, NodeKind};
pub use evaluate::{AssignmentResult, LinePlan};
pub use instance::{load_instance, ArcCostTable, CandidateLine, Mode, OdMatrix, Period, ProblemInstance, Station};
pub use milp::{build_model, MilpModel, ModelOptions, VarKind};
pub use pareto::{run_frontier, FrontierOptions, ParetoPoint, ParetoSet};
pub use solve::{solve, SolveLimits, SolveStatus, Solution};

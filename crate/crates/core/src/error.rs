use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("graph construction failed: {0}")]
    Graph(String),

    #[error("no {kind} cost for frequency {frequency}")]
    MissingArcCost { kind: &'static str, frequency: u32 },

    #[error("numerical failure in LP: {0}")]
    Numerical(String),

    #[error("LP relaxation is unbounded")]
    Unbounded,

    #[error("limit reached before any feasible solution was found")]
    LimitWithoutIncumbent,

    #[error("name collision after mangling: {0}")]
    NameCollision(String),

    #[error("solution violates row {tag} (activity {activity}, rhs {rhs})")]
    ConstraintViolation { tag: String, activity: f64, rhs: f64 },

    #[error("demand from {origin} in period {period} cannot be routed under the plan")]
    Unroutable { origin: String, period: usize },

    #[error("plan is infeasible: {0}")]
    InfeasiblePlan(String),

    #[error("brute-force guard exceeded: {count} configurations (limit {limit})")]
    GuardExceeded { count: f64, limit: f64 },

    #[error("adjustment count mismatch: {0}")]
    Inconsistent(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

//! Thin adapter over the `microlp` simplex engine.

use std::time::Duration;

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome, Variable};

use super::presolve::Reduced;
use crate::milp::Sense;
use crate::{Error, Result};

pub(crate) enum Outcome<T = Box<microlp::Solution>> {
    Solved(T),
    Infeasible,
    Limit,
}

impl Outcome {
    pub(crate) fn from_result(r: std::result::Result<SolveOutcome, microlp::Error>) -> Result<Outcome> {
        match r {
            Ok(SolveOutcome::Solution(s)) => Ok(Outcome::Solved(Box::new(s))),
            Ok(SolveOutcome::Interrupted(_)) => Ok(Outcome::Limit),
            Err(microlp::Error::Infeasible) => Ok(Outcome::Infeasible),
            Err(microlp::Error::Unbounded) => Err(Error::Unbounded),
            Err(e) => Err(Error::Numerical(e.to_string())),
        }
    }
}

pub(crate) struct Lp {
    pub problem: Problem,
    pub vars: Vec<Variable>,
}

impl Lp {
    pub(crate) fn new(reduced: &Reduced) -> Lp {
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<Variable> = (0..reduced.num_cols())
            .map(|c| problem.add_var(reduced.cost[c], (reduced.lower[c], reduced.upper[c])))
            .collect();
        for row in &reduced.rows {
            let expr: Vec<(Variable, f64)> = row.terms.iter().map(|(c, k)| (vars[*c], *k)).collect();
            let op = match row.sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Ge => ComparisonOp::Ge,
                Sense::Eq => ComparisonOp::Eq,
            };
            problem.add_constraint(&expr[..], op, row.rhs);
        }
        Lp { problem, vars }
    }

    pub(crate) fn solve(&mut self, time_limit: Option<Duration>) -> Result<Outcome> {
        if let Some(t) = time_limit {
            self.problem.set_time_limit(t);
        }
        Outcome::from_result(self.problem.solve())
    }

    pub(crate) fn values(&self, s: &microlp::Solution) -> Vec<f64> {
        self.vars.iter().map(|v| s.var_value_raw(*v)).collect()
    }
}

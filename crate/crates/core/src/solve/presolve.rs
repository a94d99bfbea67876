//! Reductions applied before handing a model to the LP engine.
//!
//! * fixed columns are substituted into the row right-hand sides;
//! * flow columns that lie on no path from the commodity's origin to one of
//!   its destinations are fixed to zero;
//! * `<=` rows whose residual right-hand side is zero and whose free columns
//!   all have positive coefficients (and lower bound zero) fix those columns
//!   to zero; rows left without free columns are checked and dropped;
//! * flow columns get the commodity's total demand as upper bound, and
//!   linking rows `sum(flow) <= M * binary` (or `<= M * (1 - binary)`) have
//!   `M` lowered to the largest flow the row can carry.
//!
//! None of these change the optimal value: a flow that is not on an
//! origin-destination path, or that exceeds its commodity's demand, only
//! arises from circulations, which never lower the cost.

use std::collections::VecDeque;

use crate::milp::{MilpModel, Sense};

const TOL: f64 = 1e-9;
const MIN_LINK_COEF: f64 = 100.0;

#[derive(Clone, Debug)]
pub struct ReducedRow {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    /// Row index in the original model.
    pub source: usize,
}

#[derive(Clone, Debug)]
pub struct Reduced {
    /// Model variable of each column.
    pub col_var: Vec<usize>,
    /// Column of each model variable, `None` when fixed.
    pub var_col: Vec<Option<usize>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: Vec<f64>,
    pub rows: Vec<ReducedRow>,
    /// Value of every model variable that was fixed.
    pub fixed_values: Vec<f64>,
    /// Objective contribution of the fixed variables.
    pub offset: f64,
}

impl Reduced {
    pub fn num_cols(&self) -> usize {
        self.col_var.len()
    }

    /// Expands column values into a full model vector.
    pub fn expand(&self, cols: &[f64]) -> Vec<f64> {
        let mut x = self.fixed_values.clone();
        for (c, v) in self.col_var.iter().enumerate() {
            x[*v] = cols[c];
        }
        x
    }
}

/// Presolve failure: the listed original row cannot be satisfied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InfeasibleRow(pub usize);

/// Reduces `model` under the variable bounds `lower`/`upper` (which may be
/// tighter than the model's own, e.g. with binaries fixed).
pub fn presolve(model: &MilpModel, lower: &[f64], upper: &[f64]) -> Result<Reduced, InfeasibleRow> {
    presolve_with(model, lower, upper, true)
}

/// As [`presolve`]; `tighten` controls the big-M lowering, which leaves the
/// columns unchanged.
pub fn presolve_with(model: &MilpModel, lower: &[f64], upper: &[f64], tighten: bool) -> Result<Reduced, InfeasibleRow> {
    let nv = model.num_vars();
    let mut lb = lower.to_vec();
    let mut ub = upper.to_vec();
    for v in 0..nv {
        if lb[v] > ub[v] + TOL {
            return Err(InfeasibleRow(usize::MAX));
        }
    }

    fix_unreachable_flows(model, &mut lb, &mut ub);

    // column -> rows
    let mut var_rows: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (r, row) in model.constraints.iter().enumerate() {
        for (v, _) in &row.terms {
            var_rows[*v].push(r);
        }
    }
    let mut queued = vec![true; model.constraints.len()];
    let mut queue: VecDeque<usize> = (0..model.constraints.len()).collect();
    while let Some(r) = queue.pop_front() {
        queued[r] = false;
        let row = &model.constraints[r];
        let mut residual = row.rhs;
        let mut free = 0usize;
        let mut all_pos = true;
        let mut all_neg = true;
        let mut zero_lb = true;
        for (v, c) in &row.terms {
            if ub[*v] - lb[*v] <= 0.0 {
                residual -= c * lb[*v];
            } else {
                free += 1;
                all_pos &= *c > 0.0;
                all_neg &= *c < 0.0;
                zero_lb &= lb[*v] == 0.0;
            }
        }
        let scale = 1.0 + row.rhs.abs();
        if free == 0 {
            let ok = match row.sense {
                Sense::Le => residual >= -TOL * scale,
                Sense::Ge => residual <= TOL * scale,
                Sense::Eq => residual.abs() <= TOL * scale,
            };
            if !ok {
                return Err(InfeasibleRow(r));
            }
            continue;
        }
        if !zero_lb {
            continue;
        }
        let forces_zero = match row.sense {
            Sense::Le => all_pos && residual <= TOL * scale,
            Sense::Ge => all_neg && residual >= -TOL * scale,
            Sense::Eq => (all_pos || all_neg) && residual.abs() <= TOL * scale,
        };
        if !forces_zero {
            continue;
        }
        if (row.sense == Sense::Le && residual < -TOL * scale)
            || (row.sense == Sense::Ge && residual > TOL * scale)
        {
            return Err(InfeasibleRow(r));
        }
        for (v, _) in &row.terms {
            if ub[*v] > lb[*v] {
                ub[*v] = 0.0;
                for &r2 in &var_rows[*v] {
                    if !queued[r2] {
                        queued[r2] = true;
                        queue.push_back(r2);
                    }
                }
            }
        }
    }

    let flow_cap = flow_bounds(model, &ub);
    for (v, cap) in flow_cap.iter().enumerate() {
        if let Some(cap) = cap {
            ub[v] = ub[v].min(cap.max(lb[v]));
        }
    }

    let mut var_col = vec![None; nv];
    let mut col_var = Vec::new();
    let mut fixed_values = vec![0.0; nv];
    let mut offset = 0.0;
    for v in 0..nv {
        if ub[v] - lb[v] <= 0.0 {
            fixed_values[v] = lb[v];
            offset += model.variables[v].cost * lb[v];
        } else {
            var_col[v] = Some(col_var.len());
            col_var.push(v);
        }
    }
    let mut rows = Vec::new();
    for (r, row) in model.constraints.iter().enumerate() {
        let mut rhs = row.rhs;
        let mut terms = Vec::new();
        for (v, c) in &row.terms {
            match var_col[*v] {
                Some(col) => terms.push((col, *c)),
                None => rhs -= c * fixed_values[*v],
            }
        }
        if !terms.is_empty() {
            if tighten {
                strengthen(model, &col_var, &ub, &mut terms, row.sense, &mut rhs);
            }
            rows.push(ReducedRow { terms, sense: row.sense, rhs, source: r });
        }
    }
    Ok(Reduced {
        lower: col_var.iter().map(|v| lb[*v]).collect(),
        upper: col_var.iter().map(|v| ub[*v]).collect(),
        cost: col_var.iter().map(|v| model.variables[*v].cost).collect(),
        col_var,
        var_col,
        rows,
        fixed_values,
        offset,
    })
}

/// Per commodity, keeps only arcs reachable from the origin and able to
/// reach a destination with positive demand.
fn fix_unreachable_flows(model: &MilpModel, lb: &mut [f64], ub: &mut [f64]) {
    let fl = &model.flows;
    if fl.is_empty() {
        return;
    }
    let mut out_arcs = vec![Vec::new(); fl.num_nodes];
    let mut in_arcs = vec![Vec::new(); fl.num_nodes];
    for (a, (t, h)) in model.arc_ends.iter().enumerate() {
        out_arcs[*t].push(a);
        in_arcs[*h].push(a);
    }
    let mut fwd = vec![false; fl.num_nodes];
    let mut bwd = vec![false; fl.num_nodes];
    let mut stack = Vec::new();
    for p in 0..fl.num_periods {
        for o in 0..fl.num_origins {
            fwd.iter_mut().for_each(|x| *x = false);
            bwd.iter_mut().for_each(|x| *x = false);
            for v in 0..fl.num_nodes {
                let b = model.constraints[fl.conservation_row(v, o, p)].rhs;
                if b < 0.0 {
                    fwd[v] = true;
                    stack.push(v);
                }
            }
            while let Some(v) = stack.pop() {
                for &a in &out_arcs[v] {
                    let h = model.arc_ends[a].1;
                    if !fwd[h] && ub[fl.var(a, o, p)] > 0.0 {
                        fwd[h] = true;
                        stack.push(h);
                    }
                }
            }
            for v in 0..fl.num_nodes {
                let b = model.constraints[fl.conservation_row(v, o, p)].rhs;
                if b > 0.0 {
                    bwd[v] = true;
                    stack.push(v);
                }
            }
            while let Some(v) = stack.pop() {
                for &a in &in_arcs[v] {
                    let t = model.arc_ends[a].0;
                    if !bwd[t] && ub[fl.var(a, o, p)] > 0.0 {
                        bwd[t] = true;
                        stack.push(t);
                    }
                }
            }
            for (a, (t, h)) in model.arc_ends.iter().enumerate() {
                let v = fl.var(a, o, p);
                if !(fwd[*t] && bwd[*h]) && lb[v] == 0.0 {
                    ub[v] = 0.0;
                }
            }
        }
    }
}

/// Upper bound on each flow column: the commodity's total demand, or the
/// single destination's demand for arcs into a sink node.
fn flow_bounds(model: &MilpModel, ub: &[f64]) -> Vec<Option<f64>> {
    let fl = &model.flows;
    let mut caps = vec![None; model.num_vars()];
    if fl.is_empty() {
        return caps;
    }
    let mut has_out = vec![false; fl.num_nodes];
    let mut has_in = vec![false; fl.num_nodes];
    for (t, h) in &model.arc_ends {
        has_out[*t] = true;
        has_in[*h] = true;
    }
    for p in 0..fl.num_periods {
        for o in 0..fl.num_origins {
            let b = |v: usize| model.constraints[fl.conservation_row(v, o, p)].rhs;
            let total: f64 = (0..fl.num_nodes).map(|v| b(v).max(0.0)).sum();
            for (a, (t, h)) in model.arc_ends.iter().enumerate() {
                let v = fl.var(a, o, p);
                if ub[v] <= 0.0 {
                    continue;
                }
                let mut cap = total;
                if !has_out[*h] {
                    cap = cap.min(b(*h).max(0.0));
                }
                if !has_in[*t] {
                    cap = cap.min((-b(*t)).max(0.0));
                }
                caps[v] = Some(cap);
            }
        }
    }
    caps
}

/// Lowers the big-M of a linking row when the flows it bounds cannot reach it.
fn strengthen(model: &MilpModel, col_var: &[usize], ub: &[f64], terms: &mut [(usize, f64)], sense: Sense, rhs: &mut f64) {
    if sense != Sense::Le {
        return;
    }
    let mut binary = None;
    let mut reach = 0.0;
    for (i, (c, k)) in terms.iter().enumerate() {
        let v = col_var[*c];
        let var = &model.variables[v];
        if var.integer {
            if binary.is_some() {
                return;
            }
            binary = Some(i);
        } else if *k == 1.0 && matches!(var.kind, crate::milp::VarKind::Flow { .. }) {
            reach += ub[v];
        } else {
            return;
        }
    }
    let Some(i) = binary else { return };
    let m = terms[i].1;
    // smaller coefficients leave the simplex basis close to singular
    let reach = reach.max(MIN_LINK_COEF);
    if m < 0.0 && *rhs == 0.0 && reach < -m {
        terms[i].1 = -reach;
    } else if m > 0.0 && *rhs == m && reach < m {
        terms[i].1 = reach;
        *rhs = reach;
    }
}

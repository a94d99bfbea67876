//! Fixed-format MPS export and solution import.
//!
//! Row and column names in the MPS file are mangled to eight characters
//! (`R0000001`, `C0000001`, 1-based in model order); a sidecar file next to
//! the MPS lists `mangled original` pairs. Solution files hold one
//! `name value` pair per line and may use either naming.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{relative_gap, Solution, SolveStatus, INTEGRALITY_TOL};
use crate::instance::ProblemInstance;
use crate::milp::{MilpModel, Sense};
use crate::{Error, Result};

/// Tolerance for rows and bounds when validating an imported solution.
pub const IMPORT_TOL: f64 = 1e-6;

pub fn row_code(r: usize) -> String {
    format!("R{:07}", r + 1)
}

pub fn col_code(v: usize) -> String {
    format!("C{:07}", v + 1)
}

/// Path of the name map written next to `mps`.
pub fn names_path(mps: &Path) -> PathBuf {
    let mut p = mps.as_os_str().to_owned();
    p.push(".names");
    PathBuf::from(p)
}

/// Numbers in fixed MPS fields are at most 12 characters wide.
fn num(x: f64) -> String {
    let s = format!("{x}");
    if s.len() <= 12 {
        return s;
    }
    for prec in (0..=7).rev() {
        let e = format!("{x:.prec$e}");
        if e.len() <= 12 {
            return e;
        }
    }
    format!("{x:.0e}")
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashMap::with_capacity(names.len());
    for n in names {
        if seen.insert(n.as_str(), ()).is_some() {
            return Err(Error::NameCollision(n.clone()));
        }
    }
    Ok(())
}

/// Renders the model as fixed-format MPS and its name map.
pub fn to_mps(model: &MilpModel, instance: &ProblemInstance) -> Result<(String, String)> {
    let col_names: Vec<String> = (0..model.num_vars()).map(|v| model.var_name(v, instance)).collect();
    let row_names: Vec<String> = model.constraints.iter().map(|c| c.tag.clone()).collect();
    check_unique(&col_names)?;
    check_unique(&row_names)?;

    let mut out = String::new();
    out.push_str("NAME          LINEPLAN\n");
    out.push_str("ROWS\n");
    out.push_str(" N  COST\n");
    for (r, row) in model.constraints.iter().enumerate() {
        let t = match row.sense {
            Sense::Le => 'L',
            Sense::Ge => 'G',
            Sense::Eq => 'E',
        };
        let _ = writeln!(out, " {t}  {}", row_code(r));
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (r, row) in model.constraints.iter().enumerate() {
        for (v, c) in &row.terms {
            by_col[*v].push((r, *c));
        }
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut markers = 0;
    for (v, var) in model.variables.iter().enumerate() {
        if var.integer != in_int {
            let kind = if var.integer { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    MARKER{markers:04}  'MARKER'                 {kind}");
            markers += 1;
            in_int = var.integer;
        }
        let name = col_code(v);
        let mut entries: Vec<(String, f64)> = Vec::new();
        if var.cost != 0.0 {
            entries.push(("COST".into(), var.cost));
        }
        entries.extend(by_col[v].iter().map(|(r, c)| (row_code(*r), *c)));
        if entries.is_empty() {
            // keep the column declared
            entries.push(("COST".into(), 0.0));
        }
        for pair in entries.chunks(2) {
            let mut line = format!("    {name:<8}  {:<8}  {:>12}", pair[0].0, num(pair[0].1));
            if let Some((r, c)) = pair.get(1) {
                let _ = write!(line, "   {r:<8}  {:>12}", num(*c));
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    if in_int {
        let _ = writeln!(out, "    MARKER{markers:04}  'MARKER'                 'INTEND'");
    }

    out.push_str("RHS\n");
    for (r, row) in model.constraints.iter().enumerate() {
        if row.rhs != 0.0 {
            let _ = writeln!(out, "    RHS       {:<8}  {:>12}", row_code(r), num(row.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for (v, var) in model.variables.iter().enumerate() {
        let name = col_code(v);
        if var.integer {
            let _ = writeln!(out, " BV BND       {name}");
            continue;
        }
        if var.lower != 0.0 {
            let _ = writeln!(out, " LO BND       {name:<8}  {:>12}", num(var.lower));
        }
        if var.upper.is_finite() {
            let _ = writeln!(out, " UP BND       {name:<8}  {:>12}", num(var.upper));
        }
    }
    out.push_str("ENDATA\n");

    let mut names = String::new();
    for (r, n) in row_names.iter().enumerate() {
        let _ = writeln!(names, "{} {n}", row_code(r));
    }
    for (v, n) in col_names.iter().enumerate() {
        let _ = writeln!(names, "{} {n}", col_code(v));
    }
    Ok((out, names))
}

/// Writes `path` and its sidecar name map.
pub fn export_mps(model: &MilpModel, instance: &ProblemInstance, path: &Path) -> Result<()> {
    let (mps, names) = to_mps(model, instance)?;
    std::fs::write(path, mps).map_err(|e| Error::io(path, e))?;
    let np = names_path(path);
    std::fs::write(&np, names).map_err(|e| Error::io(&np, e))?;
    Ok(())
}

/// One `name value` line per nonzero variable, using readable names.
pub fn solution_text(model: &MilpModel, instance: &ProblemInstance, values: &[f64]) -> String {
    let mut out = String::new();
    for (v, x) in values.iter().enumerate() {
        if *x != 0.0 {
            let _ = writeln!(out, "{} {x}", model.var_name(v, instance));
        }
    }
    out
}

pub fn write_solution(model: &MilpModel, instance: &ProblemInstance, values: &[f64], path: &Path) -> Result<()> {
    std::fs::write(path, solution_text(model, instance, values)).map_err(|e| Error::io(path, e))
}

/// Parses a solution file. Variables not listed are zero. Lines starting
/// with `#` and blank lines are ignored.
pub fn parse_solution(model: &MilpModel, instance: &ProblemInstance, text: &str) -> Result<Vec<f64>> {
    let by_name: HashMap<String, usize> = (0..model.num_vars()).map(|v| (model.var_name(v, instance), v)).collect();
    let mut values = vec![0.0; model.num_vars()];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse(format!("solution line {}: expected `name value`", n + 1)));
        };
        let value: f64 = value
            .parse()
            .map_err(|_| Error::Parse(format!("solution line {}: bad value {value:?}", n + 1)))?;
        let v = match by_name.get(name) {
            Some(v) => *v,
            None => mangled_col(name)
                .filter(|v| *v < model.num_vars())
                .ok_or_else(|| Error::Parse(format!("solution line {}: unknown variable {name}", n + 1)))?,
        };
        values[v] = value;
    }
    Ok(values)
}

fn mangled_col(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('C')?;
    if digits.len() != 7 {
        return None;
    }
    digits.parse::<usize>().ok()?.checked_sub(1)
}

/// Checks bounds, integrality and every row within [`IMPORT_TOL`].
pub fn validate_values(model: &MilpModel, values: &[f64]) -> Result<()> {
    if let Some(v) = model.first_bound_violation(values, IMPORT_TOL) {
        let var = &model.variables[v];
        let what = if var.integer && (values[v] - values[v].round()).abs() > INTEGRALITY_TOL {
            "integrality"
        } else {
            "bounds"
        };
        return Err(Error::ConstraintViolation {
            tag: format!("{what} of column {}", col_code(v)),
            activity: values[v],
            rhs: if values[v] < var.lower { var.lower } else { var.upper },
        });
    }
    if let Some((r, activity)) = model.first_violation(values, IMPORT_TOL) {
        let row = &model.constraints[r];
        return Err(Error::ConstraintViolation { tag: row.tag.clone(), activity, rhs: row.rhs });
    }
    Ok(())
}

/// Reads and validates an external solution. The returned solution has no
/// proven bound.
pub fn import_solution(model: &MilpModel, instance: &ProblemInstance, path: &Path) -> Result<Solution> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    import_solution_str(model, instance, &text)
}

pub fn import_solution_str(model: &MilpModel, instance: &ProblemInstance, text: &str) -> Result<Solution> {
    let values = parse_solution(model, instance, text)?;
    validate_values(model, &values)?;
    let objective = model.objective(&values);
    let bound = f64::NEG_INFINITY;
    Ok(Solution {
        gjt: model.gjt(&values),
        objective,
        bound,
        gap: relative_gap(objective, bound),
        status: SolveStatus::FeasibleAtLimit,
        wall_time: 0.0,
        nodes: 0,
        values,
    })
}


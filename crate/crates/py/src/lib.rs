//! Python bindings for the line planning library.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lineplan::evaluate;
use lineplan::pareto::{self, FrontierOptions};
use lineplan::solve::{self, mps, SolveLimits};
use lineplan::{build_graph, build_model, Error, MilpModel, Mode, ModelOptions, ProblemInstance};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::Validation(_) | Error::ConstraintViolation { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    match mode {
        "sym" | "symmetric" => Ok(Mode::Symmetric),
        "asym" | "asymmetric" => Ok(Mode::Asymmetric),
        _ => Err(PyValueError::new_err(format!("unknown mode {mode:?}"))),
    }
}

fn limits(time_limit: Option<f64>, gap: Option<f64>, node_limit: Option<u64>) -> SolveLimits {
    SolveLimits { time_limit, gap_limit: gap, node_limit }
}

#[pyclass(name = "Instance", module = "lineplan", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: ProblemInstance,
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyInstance { inner: lineplan::load_instance(path).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyInstance { inner: ProblemInstance::from_toml_str(text).map_err(to_py)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn with_mode(&self, mode: &str) -> PyResult<Self> {
        Ok(PyInstance { inner: self.inner.with_mode(parse_mode(mode)?).map_err(to_py)? })
    }

    #[pyo3(signature = (seed, peak_factor=2.0, directionality=0.5))]
    fn synth_demand(&self, seed: u64, peak_factor: f64, directionality: f64) -> PyResult<Self> {
        let inner = lineplan::instance::synth_demand(&self.inner, seed, peak_factor, directionality).map_err(to_py)?;
        Ok(PyInstance { inner })
    }

    #[getter]
    fn mode(&self) -> &'static str {
        match self.inner.mode {
            Mode::Symmetric => "sym",
            Mode::Asymmetric => "asym",
        }
    }

    #[getter]
    fn num_stations(&self) -> usize {
        self.inner.num_stations()
    }

    #[getter]
    fn line_ids(&self) -> Vec<String> {
        self.inner.lines.iter().map(|l| l.id.clone()).collect()
    }

    #[getter]
    fn num_periods(&self) -> usize {
        self.inner.periods.len()
    }

    fn max_adjustments(&self) -> u32 {
        pareto::max_adjustments(&self.inner)
    }

    /// `(nodes, arcs)` of the change-and-go graph.
    fn graph_size(&self) -> PyResult<(usize, usize)> {
        let g = build_graph(&self.inner).map_err(to_py)?;
        Ok((g.num_nodes(), g.num_arcs()))
    }

    fn build_model(&self, epsilon: u32) -> PyResult<PyModel> {
        let g = build_graph(&self.inner).map_err(to_py)?;
        let model = build_model(&g, &self.inner, &ModelOptions::with_epsilon(epsilon));
        Ok(PyModel { model, instance: self.inner.clone() })
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(stations={}, lines={}, periods={}, mode={})",
            self.inner.num_stations(),
            self.inner.lines.len(),
            self.inner.periods.len(),
            self.mode()
        )
    }
}

#[pyclass(name = "Solution", module = "lineplan", frozen, get_all)]
struct PySolution {
    status: String,
    objective: f64,
    gjt: f64,
    bound: f64,
    gap: f64,
    nodes: u64,
    wall_time: f64,
    values: Vec<f64>,
    freq_adjustments: Option<u32>,
    stop_adjustments: Option<u32>,
    plan: Option<PyPlan>,
}

#[pyclass(name = "Model", module = "lineplan", frozen)]
struct PyModel {
    model: MilpModel,
    instance: ProblemInstance,
}

impl PyModel {
    fn wrap(&self, s: solve::Solution) -> PyResult<PySolution> {
        let (fa, sa, plan) = if s.is_feasible() {
            let adj = pareto::count_adjustments(&self.model, &self.instance, &s.values).map_err(to_py)?;
            let plan = evaluate::LinePlan::from_values(&self.model, &self.instance, &s.values);
            (Some(adj.frequency), Some(adj.stop), Some(PyPlan { inner: plan, instance: self.instance.clone() }))
        } else {
            (None, None, None)
        };
        Ok(PySolution {
            status: s.status.as_str().to_string(),
            objective: s.objective,
            gjt: s.gjt,
            bound: s.bound,
            gap: s.gap,
            nodes: s.nodes,
            wall_time: s.wall_time,
            values: s.values,
            freq_adjustments: fa,
            stop_adjustments: sa,
            plan,
        })
    }
}

#[pymethods]
impl PyModel {
    #[getter]
    fn num_vars(&self) -> usize {
        self.model.num_vars()
    }

    #[getter]
    fn num_rows(&self) -> usize {
        self.model.num_rows()
    }

    #[pyo3(signature = (time_limit=None, gap=None, node_limit=None))]
    fn solve(&self, py: Python<'_>, time_limit: Option<f64>, gap: Option<f64>, node_limit: Option<u64>) -> PyResult<PySolution> {
        let l = limits(time_limit, gap, node_limit);
        let s = py.detach(|| lineplan::solve(&self.model, &l)).map_err(to_py)?;
        self.wrap(s)
    }

    fn lp_relax(&self, py: Python<'_>) -> PyResult<PySolution> {
        let s = py.detach(|| solve::lp_relax(&self.model)).map_err(to_py)?;
        self.wrap(s)
    }

    fn export_mps(&self, path: PathBuf) -> PyResult<()> {
        mps::export_mps(&self.model, &self.instance, &path).map_err(to_py)
    }

    fn import_solution(&self, path: PathBuf) -> PyResult<PySolution> {
        let s = mps::import_solution(&self.model, &self.instance, &path).map_err(to_py)?;
        self.wrap(s)
    }

    fn var_name(&self, index: usize) -> PyResult<String> {
        if index >= self.model.num_vars() {
            return Err(PyValueError::new_err("variable index out of range"));
        }
        Ok(self.model.var_name(index, &self.instance))
    }
}

#[pyclass(name = "LinePlan", module = "lineplan", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPlan {
    inner: evaluate::LinePlan,
    instance: ProblemInstance,
}

#[pymethods]
impl PyPlan {
    #[staticmethod]
    fn load(instance: &PyInstance, path: PathBuf) -> PyResult<Self> {
        let inner = evaluate::LinePlan::load(&instance.inner, &path).map_err(to_py)?;
        Ok(PyPlan { inner, instance: instance.inner.clone() })
    }

    /// `frequency[period][line]`, 0 when the line does not run.
    #[getter]
    fn frequency(&self) -> Vec<Vec<u32>> {
        self.inner.frequency.clone()
    }

    #[getter]
    fn stops(&self) -> Vec<Vec<Vec<bool>>> {
        self.inner.stops.clone()
    }

    /// `(frequency, stop)` adjustment counts.
    fn change_counts(&self) -> (u32, u32) {
        self.inner.change_counts(&self.instance)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string(&self.instance)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&self.instance, &path).map_err(to_py)
    }

    /// Routes the demand over the plan; returns `(gjt, max_load_factor)`.
    fn assign(&self, py: Python<'_>) -> PyResult<(f64, f64)> {
        let r = py
            .detach(|| {
                let g = build_graph(&self.instance)?;
                evaluate::assign(&self.instance, &g, &self.inner)
            })
            .map_err(to_py)?;
        Ok((r.gjt, r.max_load_factor))
    }
}

#[pyclass(name = "FrontierPoint", module = "lineplan", frozen, get_all)]
struct PyPoint {
    epsilon: u32,
    status: String,
    total_adjustments: Option<u32>,
    freq_adjustments: Option<u32>,
    stop_adjustments: Option<u32>,
    gjt: f64,
    gap: f64,
}

/// Runs the frontier; returns the points and the CSV text.
#[pyfunction]
#[pyo3(signature = (instance, epsilons=None, time_limit=None, gap=None, threads=None))]
fn run_frontier(
    py: Python<'_>,
    instance: &PyInstance,
    epsilons: Option<Vec<u32>>,
    time_limit: Option<f64>,
    gap: Option<f64>,
    threads: Option<usize>,
) -> PyResult<(Vec<PyPoint>, String)> {
    let options = FrontierOptions { epsilons, limits: limits(time_limit, gap, None), threads, ..Default::default() };
    let set = py.detach(|| pareto::run_frontier(&instance.inner, &options)).map_err(to_py)?;
    let points = set
        .points
        .iter()
        .map(|p| PyPoint {
            epsilon: p.epsilon,
            status: p.status.label(),
            total_adjustments: p.total_adjustments(),
            freq_adjustments: p.adjustments.map(|a| a.frequency),
            stop_adjustments: p.adjustments.map(|a| a.stop),
            gjt: p.gjt,
            gap: p.gap,
        })
        .collect();
    Ok((points, set.to_csv()))
}

/// Exhaustive optimum of a tiny instance: `(plan, gjt)` or `None`.
#[pyfunction]
fn brute_force(py: Python<'_>, instance: &PyInstance, epsilon: u32) -> PyResult<Option<(PyPlan, f64)>> {
    let best = py.detach(|| evaluate::brute_force(&instance.inner, epsilon)).map_err(to_py)?;
    Ok(best.map(|(plan, gjt)| (PyPlan { inner: plan, instance: instance.inner.clone() }, gjt)))
}

#[pyfunction]
fn revenue_impact(gjt_change_pct: f64, elasticity: f64) -> f64 {
    evaluate::revenue_impact(gjt_change_pct, elasticity)
}

/// Seeded random instance with at most two routes of at most two
/// intermediate stations.
#[pyfunction]
#[pyo3(signature = (seed, mode="sym", routes=2, periods=2))]
fn tiny_instance(seed: u64, mode: &str, routes: usize, periods: usize) -> PyResult<PyInstance> {
    let spec = lineplan::fixtures::TinySpec { seed, mode: parse_mode(mode)?, routes, periods };
    Ok(PyInstance { inner: lineplan::fixtures::tiny_instance(&spec) })
}

#[pymodule]
fn lineplan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyPlan>()?;
    m.add_class::<PyPoint>()?;
    m.add_function(wrap_pyfunction!(run_frontier, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(revenue_impact, m)?)?;
    m.add_function(wrap_pyfunction!(tiny_instance, m)?)?;
    Ok(())
}

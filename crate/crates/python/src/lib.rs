//! Python bindings: problems, planning, sampling and checking.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use chaintraj::document::{sample_csv, sample_times, PlanDocument};
use chaintraj::{
    builtin_bundle, check_plan, validate_problem, BoundaryConditions, Bounds, ChainSpec,
    CheckTolerances, PlannerOptions, Sign, SwitchingPlan, ValidatedProblem,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A validated transition problem.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    inner: ValidatedProblem,
}

#[pymethods]
impl PyProblem {
    /// `xmin`/`xmax` hold the bounds of x2..xn; use +-inf for none.
    #[new]
    #[pyo3(signature = (x0, xf, umin, umax, xmin=None, xmax=None))]
    fn new(
        x0: Vec<f64>,
        xf: Vec<f64>,
        umin: f64,
        umax: f64,
        xmin: Option<Vec<f64>>,
        xmax: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let n = x0.len();
        let spec = ChainSpec::new(n).map_err(value_err)?;
        let mut bounds = Bounds::input_only(n, umin, umax);
        for (list, target) in [(xmin, &mut bounds.x_min), (xmax, &mut bounds.x_max)] {
            if let Some(v) = list {
                if v.len() + 1 != n {
                    return Err(PyValueError::new_err(format!(
                        "expected {} state bounds",
                        n.saturating_sub(1)
                    )));
                }
                target[1..].copy_from_slice(&v);
            }
        }
        let inner =
            validate_problem(spec, bounds, BoundaryConditions::new(x0, xf)).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    /// Boundary warnings as JSON strings.
    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner
            .warnings
            .iter()
            .map(|w| serde_json::to_string(w).unwrap_or_default())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(x0={:?}, xf={:?})",
            self.inner.x0(),
            self.inner.xf()
        )
    }
}

/// A planned transition.
#[pyclass(name = "Plan", frozen)]
struct PyPlan {
    inner: SwitchingPlan,
    problem: ValidatedProblem,
}

#[pymethods]
impl PyPlan {
    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn profile(&self) -> String {
        self.inner.profile.to_string()
    }

    #[getter]
    fn sigma0(&self) -> i8 {
        self.inner.sigma0.value() as i8
    }

    /// Input applied in each segment.
    #[getter]
    fn inputs(&self) -> Vec<f64> {
        self.inner.trajectory.u_values.clone()
    }

    /// State and input at time `t` (clamped to `[0, T]`).
    fn evaluate(&self, t: f64) -> (Vec<f64>, f64) {
        self.inner.trajectory.eval(t)
    }

    /// CSV samples with rows `t,x1..xn,u`.
    #[pyo3(signature = (dt=None, count=None))]
    fn sample_csv(&self, dt: Option<f64>, count: Option<usize>) -> String {
        let times = sample_times(&self.inner.trajectory, dt, count);
        sample_csv(&self.inner.trajectory, &times)
    }

    /// The plan document as JSON.
    fn to_json(&self) -> String {
        let provenance = builtin_bundle(self.problem.order())
            .map(|b| b.provenance.clone())
            .unwrap_or_default();
        PlanDocument::new(&self.inner, &self.problem, &provenance).to_json()
    }

    /// Independent check; returns `(passed, failures)`.
    fn check(&self) -> (bool, Vec<String>) {
        let r = check_plan(&self.inner, &self.problem, &CheckTolerances::default());
        (r.pass, r.failures)
    }

    fn __repr__(&self) -> String {
        format!(
            "Plan(duration={}, profile='{}', sigma0={})",
            self.inner.duration, self.inner.profile, self.inner.sigma0
        )
    }
}

/// Plans the time-optimal transition with the builtin bundle.
#[pyfunction]
#[pyo3(signature = (problem, terminal_tol=None, bound_tol=None))]
fn plan(
    problem: &PyProblem,
    terminal_tol: Option<f64>,
    bound_tol: Option<f64>,
) -> PyResult<PyPlan> {
    let mut opts = PlannerOptions::default();
    if let Some(t) = terminal_tol {
        opts.terminal_tol = t;
    }
    if let Some(t) = bound_tol {
        opts.bound_tol = t;
    }
    let inner = chaintraj::plan(&problem.inner, &opts)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyPlan {
        inner,
        problem: problem.inner.clone(),
    })
}

/// Input signs and constraint map of the switching template.
#[pyfunction]
#[pyo3(signature = (n, sigma0=1))]
fn switching_sequence(n: usize, sigma0: i8) -> PyResult<(Vec<i8>, Vec<i32>)> {
    let sign = match sigma0 {
        1 => Sign::Positive,
        -1 => Sign::Negative,
        _ => return Err(PyValueError::new_err("sigma0 must be 1 or -1")),
    };
    let p = chaintraj::switching_sequence(n, sign).map_err(value_err)?;
    Ok((p.sigma, p.constraint_map))
}

/// Human-readable summary of the builtin bundle of order `n`.
#[pyfunction]
fn bundle_summary(n: usize) -> PyResult<String> {
    builtin_bundle(n)
        .map(|b| b.to_string())
        .ok_or_else(|| PyValueError::new_err(format!("no builtin bundle for order {n}")))
}

#[pymodule]
fn pychaintraj(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(switching_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(bundle_summary, m)?)?;
    Ok(())
}

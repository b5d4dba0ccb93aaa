//! Python bindings. Structured values cross the boundary as plain
//! dicts and lists via JSON, so the Python side sees the same shapes as
//! the HTTP API (0-based dose indices, `[row, col]` for combinations).

use cfbd::simulator::{band_group, builtin_scenario, builtin_scenarios, run_replicates};
use cfbd::stats::{self, BetaParams};
use cfbd::{CohortOutcome, DesignConfig, Dose, DoseGrid1, DoseGrid2, Grid, Scenario, TrialState};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

fn err(e: cfbd::Error) -> PyErr {
    match e {
        cfbd::Error::Protocol(_) | cfbd::Error::State(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Default config for the agent count with `overrides` merged on top.
fn config(agents: u8, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<DesignConfig> {
    let base = match agents {
        1 => DesignConfig::one_agent(),
        2 => DesignConfig::two_agent(),
        _ => return Err(PyValueError::new_err("agents must be 1 or 2")),
    };
    let Some(o) = overrides else { return Ok(base) };
    let mut v = serde_json::to_value(base).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let Value::Object(extra) = from_py::<Value>(o.as_any())? else { unreachable!() };
    v.as_object_mut().unwrap().extend(extra);
    let cfg: DesignConfig = serde_json::from_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

#[pyfunction]
fn beta_cdf(x: f64, a: f64, b: f64) -> PyResult<f64> {
    stats::beta_cdf(x, BetaParams::new(a, b).map_err(err)?).map_err(err)
}

#[pyfunction]
fn beta_tail(x: f64, a: f64, b: f64) -> PyResult<f64> {
    stats::beta_tail(x, BetaParams::new(a, b).map_err(err)?).map_err(err)
}

#[pyfunction]
fn log_gamma(x: f64) -> PyResult<f64> {
    stats::log_gamma(x).map_err(err)
}

/// Expected gain of treating at a dose whose DLT rate has a Beta(a, b)
/// posterior.
#[pyfunction]
#[pyo3(signature = (a, b, agents = 1, config = None))]
fn expected_utility(a: f64, b: f64, agents: u8, config: Option<&Bound<'_, PyDict>>) -> PyResult<f64> {
    let cfg = self::config(agents, config)?;
    Ok(cfbd::decision::expected_utility(BetaParams::new(a, b).map_err(err)?, &cfg))
}

#[pyfunction(name = "builtin_scenarios")]
fn py_builtin_scenarios(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &builtin_scenarios())
}

/// Operating characteristics of one design on a scenario. `scenario` is
/// a built-in name or a dict with `name`, `rates`, `theta0`, `delta0`.
/// Two-agent results also carry a `bands` table.
#[pyfunction]
#[pyo3(signature = (scenario, reps = 1000, seed = 1, calibrate = false, config = None))]
fn simulate<'py>(
    py: Python<'py>,
    scenario: &Bound<'py, PyAny>,
    reps: u64,
    seed: u64,
    calibrate: bool,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let sc: Scenario = match scenario.extract::<String>() {
        Ok(name) => builtin_scenario(&name).ok_or_else(|| PyValueError::new_err(format!("unknown scenario `{name}`")))?,
        Err(_) => from_py(scenario)?,
    };
    let mut cfg = self::config(sc.rates.agents(), config)?;
    cfg.theta0 = sc.theta0;
    cfg.delta0 = sc.delta0;
    cfg.calibrate = calibrate;
    let (oc, bands) = py
        .detach(|| {
            let oc = run_replicates(&sc, &cfg, reps, seed)?;
            let bands = if sc.rates.agents() == 2 { Some(band_group(&oc, &sc)?) } else { None };
            Ok((oc, bands))
        })
        .map_err(err)?;
    let out = to_py(py, &oc)?;
    if let Some(b) = bands {
        out.set_item("bands", to_py(py, &b)?)?;
    }
    Ok(out)
}

/// One trial conducted cohort by cohort.
#[pyclass(module = "cfbd")]
struct Trial {
    state: TrialState,
}

#[pymethods]
impl Trial {
    #[new]
    #[pyo3(signature = (agents = 1, levels = 6, rows = 4, cols = 4, config = None))]
    fn new(agents: u8, levels: usize, rows: usize, cols: usize, config: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cfg = self::config(agents, config)?;
        let grid = if agents == 1 {
            Grid::One(DoseGrid1::default_prior(levels, cfg.theta0, cfg.delta0).map_err(err)?)
        } else {
            Grid::Two(DoseGrid2::default_prior(rows, cols, cfg.theta0).map_err(err)?)
        };
        Ok(Self {
            state: TrialState::start(cfg, grid).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let state = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { state })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.state).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Records a cohort. `n` defaults to the expected cohort size.
    #[pyo3(signature = (dose, t, n = None))]
    fn report(&mut self, dose: &Bound<'_, PyAny>, t: u32, n: Option<u32>) -> PyResult<()> {
        let dose: Dose = from_py(dose)?;
        let n = n.unwrap_or_else(|| self.state.next_cohort_size());
        let outcome = CohortOutcome::new(dose, n, t).map_err(err)?;
        self.state.report_cohort(outcome).map_err(err)
    }

    /// Rebuilds the trial from its own event log and checks it matches.
    fn replay(&self) -> PyResult<Self> {
        let s = &self.state;
        let state = TrialState::replay(s.config.clone(), s.initial_grid.clone(), &s.events).map_err(err)?;
        Ok(Self { state })
    }

    #[getter]
    fn design(&self) -> &'static str {
        self.state.config.design_name()
    }

    #[getter]
    fn next_dose<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        if self.state.is_stopped() {
            return Ok(None);
        }
        to_py(py, &self.state.current).map(Some)
    }

    #[getter]
    fn next_cohort_size(&self) -> u32 {
        self.state.next_cohort_size()
    }

    #[getter]
    fn n_total(&self) -> u32 {
        self.state.n_total
    }

    #[getter]
    fn stopped(&self) -> bool {
        self.state.is_stopped()
    }

    #[getter]
    fn stop_reason<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        if !self.state.is_stopped() {
            return Ok(None);
        }
        to_py(py, &self.state.stop.reason()).map(Some)
    }

    #[getter]
    fn mtd_estimate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.state.mtd_estimate)
    }

    #[getter]
    fn recommendation<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.state.recommendation)
    }

    /// Posterior mean DLT rate per dose, row-major.
    #[getter]
    fn means(&self) -> Vec<f64> {
        self.state.grid.means()
    }

    #[getter]
    fn ess(&self) -> Vec<f64> {
        self.state.grid.ess()
    }

    #[getter]
    fn events<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.state.events)
    }

    fn __repr__(&self) -> String {
        format!(
            "Trial(design={}, n_total={}, stopped={})",
            self.design(),
            self.state.n_total,
            if self.state.is_stopped() { "True" } else { "False" }
        )
    }
}

#[pymodule]
#[pyo3(name = "cfbd")]
fn cfbd_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(beta_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(beta_tail, m)?)?;
    m.add_function(wrap_pyfunction!(log_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(expected_utility, m)?)?;
    m.add_function(wrap_pyfunction!(py_builtin_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_class::<Trial>()?;
    Ok(())
}

//! Python bindings for the relocation engine: parse the input documents,
//! replay scenarios, and use the metrics utilities from Python.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use intent_orch_core::intent;
use intent_orch_core::metrics::cpu::{self, CoreWindow, CpuCounterWindow};
use intent_orch_core::metrics::exposition;
use intent_orch_core::metrics::probe;
use intent_orch_core::report;
use intent_orch_core::scenario;
use intent_orch_core::sim;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// serde_json -> Python conversion for read-only result payloads.
fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    let obj = match value {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().unbind().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.unbind().into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.unbind().into_any()
            } else {
                n.as_f64()
                    .unwrap_or(f64::NAN)
                    .into_pyobject(py)?
                    .unbind()
                    .into_any()
            }
        }
        Value::String(s) => s.into_pyobject(py)?.unbind().into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.unbind().into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.unbind().into_any()
        }
    };
    Ok(obj)
}

fn to_py_via_json<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Py<PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &json)
}

/// Parsed service requirements for one app.
#[pyclass(frozen)]
pub struct Intent {
    inner: intent::Intent,
}

#[pymethods]
impl Intent {
    #[getter]
    fn app_id(&self) -> String {
        self.inner.app_id.clone()
    }

    #[getter]
    fn node_priority(&self) -> Vec<String> {
        self.inner.node_priority.clone()
    }

    /// Conditions as a list of {metric, op, threshold} dicts.
    fn conditions(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py_via_json(py, &self.inner.conditions)
    }

    fn __repr__(&self) -> String {
        format!(
            "Intent(app_id={:?}, conditions={})",
            self.inner.app_id,
            self.inner.conditions.len()
        )
    }
}

/// Parsed orchestrator configuration.
#[pyclass(frozen)]
pub struct OrchestratorConfig {
    inner: intent::OrchestratorConfig,
}

#[pymethods]
impl OrchestratorConfig {
    #[getter]
    fn rng_seed(&self) -> u64 {
        self.inner.rng_seed
    }

    #[getter]
    fn cpu_tie_epsilon(&self) -> f64 {
        self.inner.cpu_tie_epsilon
    }

    #[getter]
    fn return_to_priority(&self) -> bool {
        self.inner.return_to_priority
    }

    #[getter]
    fn cooldown_cycles(&self) -> u32 {
        self.inner.cooldown_cycles
    }
}

/// Parsed app deployment.
#[pyclass(frozen)]
pub struct AppDeployment {
    inner: intent::AppDeployment,
}

#[pymethods]
impl AppDeployment {
    #[getter]
    fn app_id(&self) -> String {
        self.inner.app_id.clone()
    }

    #[getter]
    fn cpu_demand(&self) -> f64 {
        self.inner.cpu_demand
    }

    #[getter]
    fn service_port(&self) -> u16 {
        self.inner.service_port
    }
}

/// Parsed cluster topology.
#[pyclass(frozen)]
pub struct Topology {
    inner: sim::Topology,
}

#[pymethods]
impl Topology {
    fn node_ids(&self) -> Vec<String> {
        self.inner.nodes.iter().map(|n| n.node_id.clone()).collect()
    }
}

/// Parsed scenario script.
#[pyclass(frozen)]
pub struct Scenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl Scenario {
    #[getter]
    fn end_ms(&self) -> u64 {
        self.inner.end_ms()
    }

    fn events(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py_via_json(py, &self.inner.events)
    }
}

/// The replayed experiment record.
#[pyclass(frozen)]
pub struct Timeline {
    inner: scenario::Timeline,
}

#[pymethods]
impl Timeline {
    /// Hosting nodes in placement order (initial placement plus each
    /// relocation target).
    fn placement_sequence(&self) -> Vec<String> {
        self.inner.placement_sequence()
    }

    fn node_ids(&self) -> Vec<String> {
        self.inner.node_ids.clone()
    }

    fn tick_count(&self) -> usize {
        self.inner.ticks.len()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    fn decision_log(&self) -> String {
        self.inner.decision_log()
    }

    /// Decisions as a list of dicts (one per control cycle).
    fn decisions(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py_via_json(py, &self.inner.decisions)
    }

    /// Render the timeline as an SVG document.
    fn to_svg(&self) -> PyResult<String> {
        report::render_svg(&self.inner).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Timeline(ticks={}, decisions={})",
            self.inner.ticks.len(),
            self.inner.decisions.len()
        )
    }
}

#[pyfunction]
fn parse_intent(text: &str) -> PyResult<Intent> {
    Ok(Intent {
        inner: intent::parse_intent(text).map_err(value_err)?,
    })
}

#[pyfunction]
fn parse_orchestrator_config(text: &str) -> PyResult<OrchestratorConfig> {
    Ok(OrchestratorConfig {
        inner: intent::parse_orchestrator_config(text).map_err(value_err)?,
    })
}

#[pyfunction]
fn parse_deployment(text: &str) -> PyResult<AppDeployment> {
    Ok(AppDeployment {
        inner: intent::parse_deployment(text).map_err(value_err)?,
    })
}

#[pyfunction]
fn parse_topology(text: &str) -> PyResult<Topology> {
    Ok(Topology {
        inner: sim::parse_topology(text).map_err(value_err)?,
    })
}

#[pyfunction]
fn parse_scenario(text: &str) -> PyResult<Scenario> {
    Ok(Scenario {
        inner: scenario::parse_scenario(text).map_err(value_err)?,
    })
}

/// Evaluate one condition against an observation; returns a dict with
/// `observed` and `fulfilled`.
#[pyfunction]
fn evaluate_condition(
    py: Python<'_>,
    metric: &str,
    op: &str,
    threshold: f64,
    observed: f64,
) -> PyResult<Py<PyAny>> {
    let condition: intent::Condition = serde_json::from_value(serde_json::json!({
        "metric": metric, "op": op, "threshold": threshold,
    }))
    .map_err(value_err)?;
    let status = intent::evaluate_condition(&condition, observed).map_err(value_err)?;
    to_py_via_json(py, &status)
}

/// Parse exposition text into a list of sample dicts.
#[pyfunction]
fn parse_exposition(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    let samples = exposition::parse_exposition(text.as_bytes()).map_err(value_err)?;
    to_py_via_json(py, &samples)
}

/// CPU percent from per-core (busy_t0, idle_t0, busy_t1, idle_t1)
/// second counters over a window.
#[pyfunction]
#[pyo3(signature = (cores, t0_ms=0, t1_ms=1000))]
fn cpu_percent_from_counters(cores: Vec<(f64, f64, f64, f64)>, t0_ms: u64, t1_ms: u64) -> PyResult<f64> {
    let window = CpuCounterWindow {
        t0_ms,
        t1_ms,
        cores: cores
            .into_iter()
            .map(|(busy_t0_s, idle_t0_s, busy_t1_s, idle_t1_s)| CoreWindow {
                busy_t0_s,
                idle_t0_s,
                busy_t1_s,
                idle_t1_s,
            })
            .collect(),
    };
    cpu::cpu_percent_from_counters(&window).map_err(value_err)
}

/// Median TCP connect RTT to `host:port`, in milliseconds.
#[pyfunction]
#[pyo3(signature = (host, port, runs=5, timeout_ms=1000))]
fn measure_rtt(py: Python<'_>, host: &str, port: u16, runs: u32, timeout_ms: u64) -> PyResult<f64> {
    py.detach(|| probe::measure_rtt(host, port, runs, timeout_ms))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Replay a scenario against a fresh simulator and return the timeline.
#[pyfunction]
#[pyo3(signature = (scenario, topology, config, intent, deployment, seed=None, tick_ms=None))]
fn run_scenario(
    scenario: &Scenario,
    topology: &Topology,
    config: &OrchestratorConfig,
    intent: &Intent,
    deployment: &AppDeployment,
    seed: Option<u64>,
    tick_ms: Option<u64>,
) -> PyResult<Timeline> {
    let overrides = scenario::RunOverrides { seed, tick_ms };
    match scenario::run_scenario(
        &scenario.inner,
        &topology.inner,
        &config.inner,
        &intent.inner,
        &deployment.inner,
        overrides,
    ) {
        Ok(timeline) => Ok(Timeline { inner: timeline }),
        Err(scenario::ScenarioError::Parse(e)) => Err(value_err(e)),
        Err(scenario::ScenarioError::Fatal { source, .. }) => {
            Err(PyRuntimeError::new_err(source.to_string()))
        }
    }
}

#[pymodule]
fn intent_orch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Intent>()?;
    m.add_class::<OrchestratorConfig>()?;
    m.add_class::<AppDeployment>()?;
    m.add_class::<Topology>()?;
    m.add_class::<Scenario>()?;
    m.add_class::<Timeline>()?;
    m.add_function(wrap_pyfunction!(parse_intent, m)?)?;
    m.add_function(wrap_pyfunction!(parse_orchestrator_config, m)?)?;
    m.add_function(wrap_pyfunction!(parse_deployment, m)?)?;
    m.add_function(wrap_pyfunction!(parse_topology, m)?)?;
    m.add_function(wrap_pyfunction!(parse_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_condition, m)?)?;
    m.add_function(wrap_pyfunction!(parse_exposition, m)?)?;
    m.add_function(wrap_pyfunction!(cpu_percent_from_counters, m)?)?;
    m.add_function(wrap_pyfunction!(measure_rtt, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}

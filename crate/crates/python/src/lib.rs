//! Python bindings. Frames and reports cross the boundary as plain dicts in
//! the same camelCase shape the JSON artifacts use.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyModule};
use serde::de::DeserializeOwned;
use serde::Serialize;

use substation_testbed::codec::{self, Frame};
use substation_testbed::events::AttackKind;
use substation_testbed::power::{self, FeederConfig};
use substation_testbed::scenario::{self, RunOutcome, Scenario};
use substation_testbed::timing::{self, TimingReport};

fn err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (s,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = obj.py().import("json")?;
    let s: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&s).map_err(err)
}

#[pyfunction]
fn encode_sv<'py>(py: Python<'py>, frame: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyBytes>> {
    let f: codec::SvFrame = from_py(frame)?;
    Ok(PyBytes::new(py, &codec::encode_sv(&f).map_err(err)?))
}

#[pyfunction]
fn decode_sv<'py>(py: Python<'py>, data: &[u8]) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &codec::decode_sv(data).map_err(err)?)
}

#[pyfunction]
fn encode_goose<'py>(py: Python<'py>, frame: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyBytes>> {
    let f: codec::GooseFrame = from_py(frame)?;
    Ok(PyBytes::new(py, &codec::encode_goose(&f).map_err(err)?))
}

#[pyfunction]
fn decode_goose<'py>(py: Python<'py>, data: &[u8]) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &codec::decode_goose(data).map_err(err)?)
}

/// "sv", "goose", "other" or "undecodable".
#[pyfunction]
fn classify(data: &[u8]) -> &'static str {
    match codec::decode_any(data) {
        Ok(Some(Frame::Sv(_))) => "sv",
        Ok(Some(Frame::Goose(_))) => "goose",
        Ok(None) => "other",
        Err(_) => "undecodable",
    }
}

#[pyfunction]
#[pyo3(signature = (peak, n, phi=0.0, frequency_hz=60, sampling_rate=4800))]
fn sample(peak: f64, n: u64, phi: f64, frequency_hz: u32, sampling_rate: u32) -> PyResult<f64> {
    let cfg = FeederConfig {
        frequency_hz,
        sampling_rate,
        ..FeederConfig::default()
    };
    cfg.validate().map_err(err)?;
    Ok(cfg.waveform(peak, n, phi))
}

#[pyfunction]
#[pyo3(signature = (window, samples_per_cycle=None))]
fn rms(window: Vec<f64>, samples_per_cycle: Option<usize>) -> PyResult<f64> {
    let n = samples_per_cycle.unwrap_or(window.len());
    power::rms(&window, n).map_err(err)
}

#[pyfunction]
fn list_scenarios() -> Vec<&'static str> {
    scenario::BUILTIN_NAMES.to_vec()
}

/// A finished run: the report plus capture and event log.
#[pyclass(module = "substation_testbed", frozen)]
struct ScenarioRun {
    outcome: RunOutcome,
}

#[pymethods]
impl ScenarioRun {
    #[getter]
    fn name(&self) -> &str {
        &self.outcome.report.scenario.name
    }

    #[getter]
    fn passed(&self) -> bool {
        self.outcome.report.passed
    }

    #[getter]
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.outcome.report)
    }

    #[getter]
    fn events<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.outcome.log)
    }

    #[getter]
    fn pcap<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.outcome.pcap)
    }

    /// Raw frames in publication order.
    fn frames<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyBytes>> {
        self.outcome
            .capture
            .iter()
            .map(|r| PyBytes::new(py, &r.frame))
            .collect()
    }

    fn write_artifacts(&self, out_dir: &str) -> PyResult<()> {
        let opts = scenario::OutputOptions {
            pcap: true,
            report: true,
        };
        scenario::write_artifacts(&self.outcome, std::path::Path::new(out_dir), opts)
            .map(|_| ())
            .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "ScenarioRun(name={:?}, passed={}, frames={})",
            self.outcome.report.scenario.name,
            self.outcome.report.passed,
            self.outcome.capture.len()
        )
    }
}

/// Runs a built-in by name, a scenario file path, or an inline JSON object.
#[pyfunction]
#[pyo3(signature = (scenario, seed=None))]
fn run_scenario(py: Python<'_>, scenario: &str, seed: Option<u64>) -> PyResult<ScenarioRun> {
    let mut s: Scenario = if scenario.trim_start().starts_with('{') {
        scenario::load_str(scenario)
    } else {
        scenario::resolve(scenario)
    }
    .map_err(err)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let outcome = py.detach(|| scenario::run(&s)).map_err(err)?;
    Ok(ScenarioRun { outcome })
}

#[pyfunction]
fn analyze_window<'py>(
    py: Python<'py>,
    attack_kind: &str,
    timing_report: &Bound<'py, PyAny>,
    detection_latency_ns: u64,
    mitigation_deploy_time_ns: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let kind: AttackKind = serde_json::from_value(serde_json::Value::String(attack_kind.into()))
        .map_err(|_| err(format!("unknown attack kind {attack_kind:?}")))?;
    let report: TimingReport = from_py(timing_report)?;
    let w = timing::analyze_window(
        kind,
        &report,
        detection_latency_ns,
        mitigation_deploy_time_ns,
    );
    to_py(py, &w)
}

#[pymodule]
#[pyo3(name = "substation_testbed")]
fn testbed_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(encode_sv, m)?)?;
    m.add_function(wrap_pyfunction!(decode_sv, m)?)?;
    m.add_function(wrap_pyfunction!(encode_goose, m)?)?;
    m.add_function(wrap_pyfunction!(decode_goose, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(rms, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_window, m)?)?;
    m.add_class::<ScenarioRun>()?;
    Ok(())
}

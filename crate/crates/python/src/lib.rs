use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use beamtrack::campaign::{execute, RunSpec, TRACE_HEADER};
use beamtrack::metrics;
use beamtrack::tracker::TrackerKind;
use beamtrack::{Error, GaussianR, Preset, ScenarioConfig};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(msg) => PyValueError::new_err(msg),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn preset(name: &str) -> PyResult<Preset> {
    Preset::from_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown preset `{name}`")))
}

/// TOML text of a named preset.
#[pyfunction]
fn preset_config(name: &str) -> PyResult<String> {
    Ok(preset(name)?.config().to_toml_string())
}

#[pyfunction]
fn trace_header() -> &'static str {
    TRACE_HEADER
}

/// Run a campaign and return one summary dict per tracker.
#[pyfunction]
#[pyo3(signature = (config=None, preset_name="desk", trackers=vec!["proposed".to_string(), "ekf".to_string()], seed=None, trials=None, slots=None, out_dir=None))]
#[allow(clippy::too_many_arguments)]
fn run_campaign<'py>(
    py: Python<'py>,
    config: Option<&str>,
    preset_name: &str,
    trackers: Vec<String>,
    seed: Option<u64>,
    trials: Option<usize>,
    slots: Option<usize>,
    out_dir: Option<PathBuf>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let base = preset(preset_name)?;
    let mut cfg = match config {
        Some(text) => ScenarioConfig::from_toml_str_or(text, base).map_err(to_py)?,
        None => base.config(),
    };
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    if let Some(n) = trials {
        cfg.run.n_trials = n;
    }
    if let Some(n) = slots {
        cfg.run.n_slots = n;
    }
    let kinds = trackers
        .iter()
        .map(|t| TrackerKind::from_name(t).ok_or_else(|| PyValueError::new_err(format!("unknown tracker `{t}`"))))
        .collect::<PyResult<Vec<_>>>()?;
    let spec = RunSpec { config: cfg, trackers: kinds, out_dir };
    let res = py.detach(|| execute(&spec)).map_err(to_py)?;
    res.summary()
        .into_iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("tracker", s.tracker.name())?;
            d.set_item("trials_completed", s.trials_completed)?;
            d.set_item("trials_excluded", s.trials_excluded)?;
            d.set_item("rmse_d", s.rmse_d)?;
            d.set_item("rmse_theta", s.rmse_theta)?;
            d.set_item("rmse_v", s.rmse_v)?;
            d.set_item("median_angle_error", s.median_angle_error)?;
            d.set_item("median_rate", s.median_rate)?;
            d.set_item("mean_sum_rate", s.mean_sum_rate)?;
            d.set_item("mean_p_mis", s.mean_p_mis)?;
            Ok(d)
        })
        .collect()
}

/// Probability that either beam misses `theta` by more than `delta`.
#[pyfunction]
fn misalignment_prob(theta: f64, vehicle: (f64, f64), rsu: (f64, f64), delta: f64) -> f64 {
    metrics::misalignment_prob(
        theta,
        &GaussianR::new(vehicle.0, vehicle.1),
        &GaussianR::new(rsu.0, rsu.1),
        delta,
    )
}

#[pyfunction]
fn sum_rate(snrs: Vec<f64>) -> f64 {
    metrics::sum_rate(&snrs)
}

#[pymodule]
fn beamtrack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_function(wrap_pyfunction!(trace_header, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(misalignment_prob, m)?)?;
    m.add_function(wrap_pyfunction!(sum_rate, m)?)?;
    Ok(())
}

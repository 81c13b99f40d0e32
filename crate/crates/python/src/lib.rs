//! Python bindings: the run pipeline driven by a TOML string, single-station
//! boundary-layer profiles and the closed-form stability quantities.

use glsc::inner::{solve_station_summary, InnerOptions, InnerParams};
use glsc::run::{pipeline, run_stages, RunConfig, Stage};
use glsc::stability;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::Path;

fn to_py(e: glsc::Error) -> PyErr {
    match e.exit_code() {
        4 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Stage names accepted by `run`.
pub fn parse_stage(name: &str) -> Option<Stage> {
    Some(match name {
        "feasibility" => Stage::Feasibility,
        "outer" => Stage::Outer,
        "inner" => Stage::Inner,
        "composite" => Stage::Composite,
        "stability" => Stage::Stability,
        "evolve1d" => Stage::Evolve1d,
        _ => return None,
    })
}

/// 2 / (3 sqrt 3).
#[pyfunction]
fn critical_current() -> f64 {
    glsc::CRITICAL_CURRENT
}

/// Run stages of the pipeline from a TOML config string into `out`.
/// Without `stages`, everything the config provides for runs. Returns the
/// manifest as a JSON string; raises on failure after writing the manifest.
#[pyfunction]
#[pyo3(signature = (config, out, stages=None, override_feasibility=false))]
fn run(py: Python<'_>, config: &str, out: &str, stages: Option<Vec<String>>, override_feasibility: bool) -> PyResult<String> {
    let cfg = RunConfig::from_toml(config).map_err(to_py)?;
    let list = match stages {
        Some(names) => names
            .iter()
            .map(|n| parse_stage(n).ok_or_else(|| PyValueError::new_err(format!("unknown stage {n:?}"))))
            .collect::<PyResult<Vec<_>>>()?,
        None => pipeline(&cfg).map_err(to_py)?,
    };
    let fresh = list.len() > 1;
    let (manifest, result) = py.detach(|| run_stages(&cfg, Path::new(out), &list, override_feasibility, fresh));
    result.map_err(to_py)?;
    let bytes = glsc::io::to_json(&manifest).map_err(to_py)?;
    String::from_utf8(bytes).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Boundary-layer profiles for current `j`, outer tangential derivative
/// `zeta_s` and outward normal derivative `zeta_n`.
#[pyfunction]
#[pyo3(signature = (j, zeta_s, zeta_n, sigma0, eta_max=None, spacing=None))]
fn inner_profile<'py>(
    py: Python<'py>,
    j: f64,
    zeta_s: f64,
    zeta_n: f64,
    sigma0: f64,
    eta_max: Option<f64>,
    spacing: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let params = InnerParams::at_station(j, zeta_s, zeta_n, sigma0).map_err(to_py)?;
    let st = py.detach(|| solve_station_summary(0.0, &params, &InnerOptions { eta_max, spacing })).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("mu_j", st.mu_j)?;
    d.set_item("rho_j", st.profiles.rho_j)?;
    d.set_item("jr", params.jr)?;
    d.set_item("fixed_point_iterations", st.fixed_point_iterations)?;
    d.set_item("tau", st.profiles.tau)?;
    d.set_item("rho", st.profiles.rho)?;
    d.set_item("phi", st.profiles.phi)?;
    d.set_item("upsilon", st.profiles.upsilon)?;
    Ok(d)
}

/// Eigenvalues and mixing constants of mode wavenumber `gamma`.
#[pyfunction]
fn stability_mode<'py>(py: Python<'py>, beta: f64, sigma: f64, gamma: f64) -> PyResult<Bound<'py, PyDict>> {
    let m = stability::eigenvalues(beta, sigma, gamma);
    let d = PyDict::new(py);
    d.set_item("lambda_plus", m.lambda_plus)?;
    d.set_item("lambda_minus", m.lambda_minus)?;
    d.set_item("a_plus", m.a_plus)?;
    d.set_item("a_minus", m.a_minus)?;
    d.set_item("discriminant", m.discriminant)?;
    Ok(d)
}

/// Long-wave limit of the smaller eigenvalue.
#[pyfunction]
fn lambda_minus_limit(beta: f64, sigma: f64) -> f64 {
    stability::lambda_minus_limit(beta, sigma)
}

/// Current ratio beta at which the long-wave eigenvalue changes sign.
#[pyfunction]
#[pyo3(signature = (sigma, tol=1e-12))]
fn stability_threshold(sigma: f64, tol: f64) -> PyResult<f64> {
    if !(sigma > 0.0 && tol > 0.0) {
        return Err(PyValueError::new_err("sigma and tol must be positive"));
    }
    Ok(stability::threshold(sigma, tol))
}

#[pymodule]
fn glsc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(critical_current, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(inner_profile, m)?)?;
    m.add_function(wrap_pyfunction!(stability_mode, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_minus_limit, m)?)?;
    m.add_function(wrap_pyfunction!(stability_threshold, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in [Stage::Feasibility, Stage::Outer, Stage::Inner, Stage::Composite, Stage::Stability, Stage::Evolve1d] {
            assert_eq!(parse_stage(s.name()), Some(s));
        }
        assert_eq!(parse_stage("sweep"), None);
    }
}

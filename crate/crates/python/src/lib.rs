//! Python bindings. Parameter tuples travel as JSON strings in the same
//! shape as the `[params]` table of an experiment config.

use std::path::PathBuf;

use cbi_core::experiment::{self, Command, Overrides};
use cbi_core::params::AdmissibleParams;
use cbi_core::sim::{self, InitialState, SchemeConfig};
use cbi_core::smoothing::{self, Theorem, TheoremInputs};
use cbi_core::{density, oracle, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::OdeFailure(_) | Error::QuadratureFailure(_) | Error::NonFiniteState { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_params(json: &str) -> PyResult<AdmissibleParams> {
    let p: AdmissibleParams =
        serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("params: {e}")))?;
    p.check_dims().map_err(py_err)?;
    Ok(p)
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn parse_theorem(name: &str) -> PyResult<Theorem> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown theorem {name:?}; use general, no_diffusion or axis_aligned")))
}

fn parse_command(name: &str) -> PyResult<Command> {
    Ok(match name {
        "validate" => Command::Validate,
        "certify" => Command::Certify,
        "check" => Command::Check,
        "simulate" => Command::Simulate,
        "density" => Command::Density,
        "oracle-compare" | "oracle_compare" => Command::OracleCompare,
        _ => return Err(PyValueError::new_err(format!("unknown command {name:?}"))),
    })
}

/// Validation report as a JSON string.
#[pyfunction]
fn validate(params: &str) -> PyResult<String> {
    to_json(&parse_params(params)?.validate().map_err(py_err)?)
}

/// Smoothing certificate as a JSON string, or None.
#[pyfunction]
fn certify(params: &str) -> PyResult<Option<String>> {
    smoothing::certify(&parse_params(params)?).map_err(py_err)?.map(|c| to_json(&c)).transpose()
}

#[pyfunction]
#[pyo3(signature = (params, theorem, gamma0=None, tau=None))]
fn check_theorem(params: &str, theorem: &str, gamma0: Option<Vec<f64>>, tau: Option<Vec<f64>>) -> PyResult<String> {
    let p = parse_params(params)?;
    let cert = smoothing::certify(&p).map_err(py_err)?;
    let inputs = TheoremInputs { gamma0, tau, ..TheoremInputs::inferred() };
    to_json(&smoothing::check_theorem(&p, cert.as_ref(), parse_theorem(theorem)?, &inputs).map_err(py_err)?)
}

/// Per-coordinate rates of a preset ledger.
#[pyfunction]
#[pyo3(signature = (theorem, dim, gamma0=vec![2.0], tau=vec![0.5]))]
fn kappa_preset(theorem: &str, dim: usize, gamma0: Vec<f64>, tau: Vec<f64>) -> PyResult<Vec<f64>> {
    let ledger = smoothing::ledger_preset(parse_theorem(theorem)?, dim, &gamma0, &tau).map_err(py_err)?;
    Ok(smoothing::kappa(&ledger, None).map_err(py_err)?.kappas())
}

/// Anisotropy weights and mean smoothness.
#[pyfunction]
fn anisotropy(alpha: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    let a = density::anisotropy_from_alphas(&alpha).map_err(py_err)?;
    Ok((a.a, a.mean_alpha))
}

#[pyfunction]
fn laplace_cir(c: f64, beta: f64, b: f64, x0: f64, t: f64, lam: f64) -> PyResult<f64> {
    oracle::laplace_cir(c, beta, b, x0, t, lam).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (params, x0, t, lam, tol=1e-10))]
fn laplace_cbi_1d(params: &str, x0: f64, t: f64, lam: f64, tol: f64) -> PyResult<f64> {
    oracle::laplace_cbi_1d(&parse_params(params)?, x0, t, lam, tol).map_err(py_err)
}

/// Terminal states of `n_paths` Euler paths.
#[pyfunction]
#[pyo3(signature = (params, x0, t, dt, n_paths, seed, delta=0.05))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    params: &str,
    x0: Vec<f64>,
    t: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    delta: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let p = parse_params(params)?;
    let cfg = SchemeConfig::new(dt, delta, n_paths, seed);
    let ens = py
        .detach(|| sim::simulate(&p, &InitialState::Point(x0), t, &cfg))
        .map_err(py_err)?;
    Ok(ens.terminal)
}

/// Runs a CLI subcommand; returns (exit code, artifact paths, summary).
#[pyfunction]
#[pyo3(signature = (command, config, out, seed=None, paths=None))]
fn run(
    py: Python<'_>,
    command: &str,
    config: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    paths: Option<usize>,
) -> PyResult<(i32, Vec<String>, String)> {
    let cmd = parse_command(command)?;
    let overrides = Overrides { seed, paths };
    let outcome = py.detach(|| experiment::run(cmd, &config, &out, &overrides)).map_err(py_err)?;
    let artifacts = outcome.artifacts.iter().map(|p| p.display().to_string()).collect();
    Ok((outcome.exit_code, artifacts, outcome.summary))
}

#[pymodule]
fn cbi_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", cbi_core::ARTIFACT_VERSION)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(check_theorem, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_preset, m)?)?;
    m.add_function(wrap_pyfunction!(anisotropy, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_cir, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_cbi_1d, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}

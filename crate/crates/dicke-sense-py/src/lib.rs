//! Python bindings. Rates are in units of the collective decay rate and the
//! drive is given as a ratio to its critical value.

use std::collections::HashMap;

use dicke_sense::dynamics::{self, CorrelationKind};
use dicke_sense::harness::sweep::T1Policy;
use dicke_sense::interferometer::{self, ErrorConfig, ErrorSource, Observable};
use dicke_sense::metrology::{self, QfiConfig};
use dicke_sense::model::{Model, Preparation};
use dicke_sense::permsym::CollectiveObservables;
use dicke_sense::timebin::BinSource;
use dicke_sense::ModelParams;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: dicke_sense::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn params(n: usize, omega_ratio: f64, gamma_loc_ratio: f64) -> PyResult<ModelParams> {
    ModelParams::from_ratios(n, omega_ratio, gamma_loc_ratio).map_err(py_err)
}

/// `t1` is "ss", a number (Gamma*t1 from the ground state) or "sy_maxK".
fn preparation(p: &ModelParams, t1: &str) -> PyResult<Preparation> {
    t1.parse::<T1Policy>().and_then(|t| t.resolve(p)).map_err(py_err)
}

fn bin_dt(p: &ModelParams, dt: Option<f64>) -> f64 {
    dt.map(|d| d / p.gamma_coll).unwrap_or_else(|| metrology::default_dt(p))
}

/// Critical drive `N Gamma / 2` for unit Gamma.
#[pyfunction]
fn omega_c(n: usize) -> PyResult<f64> {
    Ok(params(n, 1.0, 0.0)?.omega_c())
}

/// Stationary collective moments.
#[pyfunction]
#[pyo3(signature = (n, omega_ratio, gamma_loc_ratio = 0.0))]
fn steady_moments(n: usize, omega_ratio: f64, gamma_loc_ratio: f64) -> PyResult<HashMap<String, f64>> {
    let p = params(n, omega_ratio, gamma_loc_ratio)?;
    let m = Model::new(&p).map_err(py_err)?;
    let x = m.prepare(Preparation::Stationary).map_err(py_err)?;
    let o = CollectiveObservables::of(&m.l.space, &x);
    Ok(HashMap::from([
        ("sx".to_string(), o.sx),
        ("sy".to_string(), o.sy),
        ("sz".to_string(), o.sz),
        ("spm".to_string(), o.spm),
        ("sm_re".to_string(), o.sm.re),
        ("sm_im".to_string(), o.sm.im),
        ("i_inc".to_string(), dynamics::incoherent_intensity_of(&m.l, &x)),
    ]))
}

/// Stationary `<S+(tau) S->` as (re, im) pairs over Gamma*tau.
#[pyfunction]
fn correlation(n: usize, omega_ratio: f64, taus: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    let p = params(n, omega_ratio, 0.0)?;
    let m = Model::new(&p).map_err(py_err)?;
    let x = m.prepare(Preparation::Stationary).map_err(py_err)?;
    let ts: Vec<f64> = taus.iter().map(|t| t / p.gamma_coll).collect();
    let c = dynamics::two_time_correlation(&m.l, &x, 0.0, &ts, CorrelationKind::PlusMinus).map_err(py_err)?;
    Ok(c.values.iter().map(|z| (z.re, z.im)).collect())
}

/// One-bin QFI per unit time.
#[pyfunction]
#[pyo3(signature = (n, omega_ratio, gamma_loc_ratio = 0.0, t1 = "ss", dt = None, source = "exact", dg_rel = 1e-4))]
fn qfi_one_bin(n: usize, omega_ratio: f64, gamma_loc_ratio: f64, t1: &str, dt: Option<f64>, source: &str, dg_rel: f64) -> PyResult<f64> {
    let p = params(n, omega_ratio, gamma_loc_ratio)?;
    let src: BinSource = source.parse().map_err(py_err)?;
    let cfg = QfiConfig::new(bin_dt(&p, dt), src).with_dg_rel(dg_rel);
    Ok(metrology::qfi_one_bin(&p, preparation(&p, t1)?, &cfg).map_err(py_err)?.per_time)
}

/// Two-bin QFI per unit time over Gamma*tau.
#[pyfunction]
#[pyo3(signature = (n, omega_ratio, taus, gamma_loc_ratio = 0.0, t1 = "ss", dt = None, source = "analytic", dg_rel = 1e-3))]
#[allow(clippy::too_many_arguments)]
fn qfi_two_bin(
    n: usize,
    omega_ratio: f64,
    taus: Vec<f64>,
    gamma_loc_ratio: f64,
    t1: &str,
    dt: Option<f64>,
    source: &str,
    dg_rel: f64,
) -> PyResult<Vec<f64>> {
    let p = params(n, omega_ratio, gamma_loc_ratio)?;
    let src: BinSource = source.parse().map_err(py_err)?;
    let cfg = QfiConfig::new(bin_dt(&p, dt), src).with_dg_rel(dg_rel);
    let ts: Vec<f64> = taus.iter().map(|t| t / p.gamma_coll).collect();
    Ok(metrology::qfi_vs_tau(&p, preparation(&p, t1)?, &ts, &cfg).map_err(py_err)?.per_time())
}

/// Counting-measurement errors (times Gamma*dt) keyed by observable; None at
/// insensitive lags.
#[pyfunction]
#[pyo3(signature = (n, omega_ratio, taus, gamma_loc_ratio = 0.0, t1 = "ss", dt = None, source = "analytic", dg_rel = 1e-3))]
#[allow(clippy::too_many_arguments)]
fn estimation_errors(
    n: usize,
    omega_ratio: f64,
    taus: Vec<f64>,
    gamma_loc_ratio: f64,
    t1: &str,
    dt: Option<f64>,
    source: &str,
    dg_rel: f64,
) -> PyResult<HashMap<String, Vec<Option<f64>>>> {
    let p = params(n, omega_ratio, gamma_loc_ratio)?;
    let src: ErrorSource = source.parse().map_err(py_err)?;
    let cfg = ErrorConfig { dg_rel, ..ErrorConfig::new(bin_dt(&p, dt), src) };
    let ts: Vec<f64> = taus.iter().map(|t| t / p.gamma_coll).collect();
    let scan = interferometer::error_scan(&p, preparation(&p, t1)?, &ts, &cfg).map_err(py_err)?;
    Ok(Observable::ALL
        .iter()
        .map(|&o| {
            let v = scan.trace(o).iter().map(|e| (!e.insensitive).then(|| e.scaled(p.gamma_coll))).collect();
            (o.as_str().to_string(), v)
        })
        .collect())
}

/// Runs the command-line interface with `args` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    dicke_sense::cli::run(std::iter::once("dicke-sense".to_string()).chain(args))
}

#[pymodule]
fn dicke_sense_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(omega_c, m)?)?;
    m.add_function(wrap_pyfunction!(steady_moments, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(qfi_one_bin, m)?)?;
    m.add_function(wrap_pyfunction!(qfi_two_bin, m)?)?;
    m.add_function(wrap_pyfunction!(estimation_errors, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}

//! Python bindings. Matrices cross the boundary as lists of rows and
//! reports as plain dicts.

use std::path::PathBuf;

use pmc_core::bounds::{lower_bound, upper_bound, BoundConstants};
use pmc_core::demo::{run_demo, DemoConfig};
use pmc_core::error::Error;
use pmc_core::imaging::{read_image, solar_fixture};
use pmc_core::matrix::IntensityMatrix;
use pmc_core::observations::{Observation, ObservationSet};
use pmc_core::region::FeasibleRegion;
use pmc_core::solvers::{solve, SolverConfig};
use pmc_core::synth::{make_instance, verify_lemmas, SynthesisSpec};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else if e.is_solver_failure() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

type Triples = Vec<(usize, usize, u64)>;

fn observation_set(d1: usize, d2: usize, triples: Triples) -> PyResult<ObservationSet> {
    let samples = triples.into_iter().map(|(i, j, y)| Observation { i, j, y }).collect();
    ObservationSet::from_samples(d1, d2, samples).map_err(to_py)
}

/// Draws a rank-`rank` truth and Poisson counts; returns `(truth, [(i, j, y), ...])`.
#[pyfunction]
#[pyo3(signature = (d1, d2, rank, alpha, beta, m, seed=0))]
fn simulate(
    d1: usize,
    d2: usize,
    rank: usize,
    alpha: f64,
    beta: f64,
    m: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Triples)> {
    let region = FeasibleRegion::new(d1, d2, alpha, beta, rank).map_err(to_py)?;
    let inst = make_instance(&SynthesisSpec::new(region, m, seed)).map_err(to_py)?;
    let obs = inst.observations.samples().iter().map(|o| (o.i, o.j, o.y)).collect();
    Ok((inst.truth.to_rows(), obs))
}

/// Estimates the intensity matrix from `(i, j, y)` triples; returns
/// `(estimate, report)`.
#[pyfunction]
#[pyo3(signature = (observations, d1, d2, alpha, beta, rank, algorithm="pmlsv", max_iter=2000, lam=0.1, l0=1e-4, eta=1.1, projection="dykstra"))]
#[allow(clippy::too_many_arguments)]
fn complete<'py>(
    py: Python<'py>,
    observations: Triples,
    d1: usize,
    d2: usize,
    alpha: f64,
    beta: f64,
    rank: usize,
    algorithm: &str,
    max_iter: usize,
    lam: f64,
    l0: f64,
    eta: f64,
    projection: &str,
) -> PyResult<(Vec<Vec<f64>>, Bound<'py, PyAny>)> {
    let obs = observation_set(d1, d2, observations)?;
    let region = FeasibleRegion::new(d1, d2, alpha, beta, rank).map_err(to_py)?;
    let cfg = SolverConfig {
        algorithm: algorithm.parse().map_err(to_py)?,
        max_iter,
        lambda: lam,
        l0,
        eta,
        projection: projection.parse().map_err(to_py)?,
        ..SolverConfig::default()
    };
    let report = py.detach(|| solve(&obs, &region, &cfg)).map_err(to_py)?;
    Ok((report.estimate.to_rows(), json_to_py(py, &report.to_json())?))
}

/// Per-entry mean squared error between two equally shaped matrices.
#[pyfunction]
fn mse(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    let a = IntensityMatrix::from_rows(&a).map_err(to_py)?;
    let b = IntensityMatrix::from_rows(&b).map_err(to_py)?;
    pmc_core::matrix::mse_per_entry(&a, &b).map_err(to_py)
}

/// Upper and lower error bounds as `{"upper": {...}, "lower": {...}}`.
#[pyfunction]
#[pyo3(signature = (d1, d2, rank, alpha, beta, m, c_prime=None, c0=None, c1=None, c2=None))]
#[allow(clippy::too_many_arguments)]
fn bounds<'py>(
    py: Python<'py>,
    d1: usize,
    d2: usize,
    rank: usize,
    alpha: f64,
    beta: f64,
    m: f64,
    c_prime: Option<f64>,
    c0: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let region = FeasibleRegion::new(d1, d2, alpha, beta, rank).map_err(to_py)?;
    let d = BoundConstants::default();
    let k = BoundConstants {
        c_prime: c_prime.unwrap_or(d.c_prime),
        c0: c0.unwrap_or(d.c0),
        c1: c1.unwrap_or(d.c1),
        c2: c2.unwrap_or(d.c2),
    };
    let out = PyDict::new(py);
    out.set_item("upper", json_to_py(py, &upper_bound(&region, m, &k).to_json())?)?;
    out.set_item("lower", json_to_py(py, &lower_bound(&region, m, &k).to_json())?)?;
    Ok(out)
}

/// Monte Carlo check of the supporting inequalities.
#[pyfunction]
#[pyo3(signature = (samples=10_000, seed=0, alpha=9.0, beta=1.0, d1=10, d2=8, rank=2))]
#[allow(clippy::too_many_arguments)]
fn verify<'py>(
    py: Python<'py>,
    samples: usize,
    seed: u64,
    alpha: f64,
    beta: f64,
    d1: usize,
    d2: usize,
    rank: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let region = FeasibleRegion::new(d1, d2, alpha, beta, rank).map_err(to_py)?;
    let report = py.detach(|| verify_lemmas(&region, samples, seed)).map_err(to_py)?;
    json_to_py(py, &report.to_json())
}

/// Image recovery on a PGM/CSV image, or the bundled 48x48 frame when
/// `image` is None. Returns a dict with mse, baseline_mse and the images.
#[pyfunction]
#[pyo3(signature = (image=None, p=0.8, seed=0, scale=1.0, beta=1.0, alpha=None, max_iter=2000, lam=0.1, l0=1e-4, eta=1.1))]
#[allow(clippy::too_many_arguments)]
fn demo<'py>(
    py: Python<'py>,
    image: Option<PathBuf>,
    p: f64,
    seed: u64,
    scale: f64,
    beta: f64,
    alpha: Option<f64>,
    max_iter: usize,
    lam: f64,
    l0: f64,
    eta: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let img = match image {
        Some(path) => read_image(path),
        None => solar_fixture(),
    }
    .map_err(to_py)?;
    let cfg = DemoConfig {
        p,
        seed,
        scale,
        beta,
        alpha,
        solver: SolverConfig {
            max_iter,
            lambda: lam,
            l0,
            eta,
            ..SolverConfig::default()
        },
        ..DemoConfig::default()
    };
    let out = py.detach(|| run_demo(&img, &cfg)).map_err(to_py)?;
    let rows = |im: &pmc_core::imaging::Image| im.to_matrix().to_rows();
    let d = PyDict::new(py);
    d.set_item("mse", out.mse)?;
    d.set_item("baseline_mse", out.baseline_mse)?;
    d.set_item("m_realized", out.m_realized)?;
    d.set_item("alpha", out.region.alpha)?;
    d.set_item("beta", out.region.beta)?;
    d.set_item("truth", rows(&out.truth))?;
    d.set_item("observed", rows(&out.observed))?;
    d.set_item("recovered", rows(&out.recovered))?;
    d.set_item("report", json_to_py(py, &out.report.to_json())?)?;
    Ok(d)
}

#[pymodule]
fn pmc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(complete, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(demo, m)?)?;
    Ok(())
}

//! Python bindings. Structured results cross the boundary as JSON strings.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rgflow::kinematics::MomentumConfig;
use rgflow::trees::{enumerate_fully_reduced, enumerate_topologies, WeightedTree};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Dimension of a tree given as JSON.
#[pyfunction]
fn tree_dimension(tree: &str) -> PyResult<f64> {
    Ok(WeightedTree::from_json(tree).map_err(value_err)?.dimension())
}

/// Weight of a tree at the given momenta. Without a special vertex the
/// last momentum may be omitted.
#[pyfunction]
#[pyo3(signature = (tree, momenta, lam, mu = 1.0))]
fn tree_weight(tree: &str, momenta: Vec<[f64; 4]>, lam: f64, mu: f64) -> PyResult<f64> {
    let t = WeightedTree::from_json(tree).map_err(value_err)?;
    let cfg = if t.has_special() {
        MomentumConfig::free(momenta)
    } else if momenta.len() + 1 == t.n_legs() {
        MomentumConfig::conserved_from_independent(momenta)
    } else {
        MomentumConfig::conserved(momenta).map_err(value_err)?
    };
    t.weight(&cfg, mu, lam).map_err(value_err)
}

/// Fully reduced trees (or their topologies) with `n` legs, as JSON strings.
#[pyfunction]
#[pyo3(signature = (n, special = false, topologies = false))]
fn enumerate_trees(n: usize, special: bool, topologies: bool) -> Vec<String> {
    let ts = if topologies { enumerate_topologies(n, special) } else { enumerate_fully_reduced(n, special) };
    ts.iter().map(|t| t.to_json()).collect()
}

#[pyfunction]
fn g_s(dim: f64, r: i64, wlen: i64, s: i64) -> f64 {
    rgflow::bounds::g_s(dim, r, wlen, s)
}

#[pyfunction]
fn expint(z: f64, k: u32) -> PyResult<num_complex::Complex64> {
    rgflow::specialfns::expint(z, k).map_err(value_err)
}

/// BRST/BV suite report as JSON.
#[pyfunction]
#[pyo3(signature = (algebra, anomaly = false, seed = 20240607))]
fn brst_check(py: Python<'_>, algebra: &str, anomaly: bool, seed: u64) -> PyResult<String> {
    let rep = py.detach(|| rgflow::brstbv::run_suite(algebra, anomaly, seed)).map_err(value_err)?;
    json(&rep)
}

/// Lemma suite report as JSON; an empty list runs every lemma.
#[pyfunction]
#[pyo3(signature = (names = Vec::new(), samples = None, seed = 20240607))]
fn lemma_suite(py: Python<'_>, names: Vec<String>, samples: Option<usize>, seed: u64) -> PyResult<String> {
    let rep = py.detach(|| rgflow::specialfns::run_lemma_suite(&names, samples, seed)).map_err(value_err)?;
    json(&rep)
}

/// Integrates the flow for a JSON configuration (empty object for the
/// defaults) and writes the table into `out_dir`; returns the table path.
#[pyfunction]
fn integrate_flow(py: Python<'_>, config: &str, out_dir: &str) -> PyResult<String> {
    let cfg: rgflow::flow::FlowConfig = serde_json::from_str(config).map_err(value_err)?;
    let path = py
        .detach(|| rgflow::flow::integrate_flow(&cfg).and_then(|t| t.save(std::path::Path::new(out_dir))))
        .map_err(value_err)?;
    Ok(path.to_string_lossy().into_owned())
}

/// Bound reports for a saved table, as JSON.
#[pyfunction]
fn verify_bounds(table: &str) -> PyResult<String> {
    let t = rgflow::flow::CacTable::load(std::path::Path::new(table)).map_err(value_err)?;
    json(&rgflow::bounds::verify_all(&t).map_err(value_err)?)
}

#[pymodule]
fn rgflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tree_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(tree_weight, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_trees, m)?)?;
    m.add_function(wrap_pyfunction!(g_s, m)?)?;
    m.add_function(wrap_pyfunction!(expint, m)?)?;
    m.add_function(wrap_pyfunction!(brst_check, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_suite, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_flow, m)?)?;
    m.add_function(wrap_pyfunction!(verify_bounds, m)?)?;
    Ok(())
}

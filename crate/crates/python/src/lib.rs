//! Python bindings. Structured values cross the boundary as the same JSON
//! documents the command-line tool reads and writes.

use dynacd_core::evaluation::{self, PairKind, ScoredPair};
use dynacd_core::generator::{self, MembershipStyle};
use dynacd_core::inference::{self, FixedParams};
use dynacd_core::{EmConfig, FitResult, GenConfig, ScoredPairs, TemporalNetwork};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load_network(network_json: &str) -> PyResult<TemporalNetwork> {
    TemporalNetwork::from_json(serde_json::from_str(network_json).map_err(py_err)?).map_err(py_err)
}

/// Sample a synthetic network. Returns `(network_json, truth_json)`.
#[pyfunction]
#[pyo3(signature = (
    n_nodes = 300, n_communities = 8, n_steps = 20, avg_degree = 8.0, rho_a = 0.1,
    beta = 0.2, phi = 0.2, ell = 0.2, pi = None, mu = None, mixed = false, seed = 42
))]
#[allow(clippy::too_many_arguments)]
fn generate(
    n_nodes: usize,
    n_communities: usize,
    n_steps: usize,
    avg_degree: f64,
    rho_a: f64,
    beta: f64,
    phi: f64,
    ell: f64,
    pi: Option<f64>,
    mu: Option<f64>,
    mixed: bool,
    seed: u64,
) -> PyResult<(String, String)> {
    let config = GenConfig {
        n_nodes,
        n_communities,
        n_steps,
        avg_degree,
        rho_a,
        beta,
        phi,
        ell,
        pi: pi.unwrap_or(GenConfig::default().pi),
        mu,
        membership: if mixed {
            MembershipStyle::Mixed
        } else {
            MembershipStyle::Hard
        },
        seed,
        ..GenConfig::default()
    };
    let (net, truth) = generator::generate(&config).map_err(py_err)?;
    Ok((
        serde_json::to_string(&net.to_json()).map_err(py_err)?,
        serde_json::to_string(&truth.to_json()).map_err(py_err)?,
    ))
}

/// Fit the model to a network JSON document. Returns the fit as JSON.
#[pyfunction]
#[pyo3(signature = (network_json, k, restarts = 5, max_iter = 500, tol = 1e-3, seed = 42, baseline = false))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    network_json: &str,
    k: usize,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
    baseline: bool,
) -> PyResult<String> {
    let net = load_network(network_json)?;
    let mut config = EmConfig::new(k);
    config.n_restarts = restarts;
    config.max_iter = max_iter;
    config.tol = tol;
    config.seed = seed;
    if baseline {
        config.fixed = FixedParams::baseline();
    }
    let result = py
        .detach(|| inference::fit(&net, &config))
        .map_err(py_err)?;
    serde_json::to_string(&result).map_err(py_err)
}

/// `(i, j, Q_ij)` for every pair `i < j`, highest posterior first.
#[pyfunction]
fn anomaly_scores(fit_json: &str) -> PyResult<Vec<(usize, usize, f64)>> {
    let result: FitResult = serde_json::from_str(fit_json).map_err(py_err)?;
    let n = result.q.n_nodes;
    let mut out: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, result.q.get(i, j)))
        .collect();
    out.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    Ok(out)
}

/// Rank AUC of `scores` against boolean `labels`.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    let pairs = scores
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(idx, (score, label))| ScoredPair {
            i: idx,
            j: idx,
            score,
            label,
        })
        .collect();
    let scored = ScoredPairs::new(PairKind::Ordered, pairs).map_err(py_err)?;
    evaluation::auc(&scored).map_err(py_err)
}

/// Cosine similarity of two flattened `N x K` membership matrices after the
/// best matching of communities.
#[pyfunction]
fn cosine_similarity(truth: Vec<f64>, inferred: Vec<f64>, k: usize) -> PyResult<f64> {
    evaluation::cosine_similarity(&truth, &inferred, k).map_err(py_err)
}

/// Inject anomalous pairs. Returns `(network_json, pairs)`.
#[pyfunction]
#[pyo3(signature = (network_json, rho_a, p = 0.5, seed = 42))]
fn inject(
    network_json: &str,
    rho_a: f64,
    p: f64,
    seed: u64,
) -> PyResult<(String, Vec<(usize, usize)>)> {
    let net = load_network(network_json)?;
    let (out, pairs) = evaluation::inject_anomalies(&net, rho_a, p, seed).map_err(py_err)?;
    Ok((
        serde_json::to_string(&out.to_json()).map_err(py_err)?,
        pairs,
    ))
}

#[pymodule]
fn dynacd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(anomaly_scores, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(inject, m)?)?;
    Ok(())
}

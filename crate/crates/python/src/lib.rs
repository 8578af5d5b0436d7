//! Python bindings: load contracts, verify warnings, and score results.

use std::path::PathBuf;
use std::time::Duration;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use reverify::evm;
use reverify::harness;
use reverify::ingest::{self, BundleSet};
use reverify::verifier::{self, SolverConfig, VerifyConfig};
use reverify::word::Selector;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_selector(s: &str) -> PyResult<Selector> {
    if s.contains('(') {
        Ok(Selector::from_signature(s))
    } else {
        s.parse().map_err(value_err)
    }
}

#[pyclass(frozen, module = "pyreverify")]
struct Verdict {
    inner: verifier::Verdict,
}

#[pymethods]
impl Verdict {
    #[getter]
    fn contract_id(&self) -> &str {
        &self.inner.contract_id
    }

    #[getter]
    fn selector(&self) -> String {
        self.inner.selector.to_string()
    }

    /// "confirmed", "refuted" or "unknown".
    #[getter]
    fn outcome(&self) -> String {
        format!("{:?}", self.inner.outcome).to_lowercase()
    }

    #[getter]
    fn elapsed_s(&self) -> f64 {
        self.inner.elapsed_s
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.inner.steps
    }

    #[getter]
    fn reason(&self) -> Option<String> {
        self.inner.reason.clone()
    }

    /// Witness trace lines of a confirmed verdict.
    #[getter]
    fn trace(&self) -> Vec<String> {
        self.inner.witness.as_ref().map(|w| w.trace.clone()).unwrap_or_default()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Verdict({} {} {})",
            self.inner.contract_id,
            self.inner.selector,
            self.outcome()
        )
    }
}

/// A directory of contracts.
#[pyclass(frozen, module = "pyreverify")]
struct Corpus {
    bundles: BundleSet,
}

fn config(timeout: f64, prune: bool, jobs: Option<usize>, solver: Option<&str>) -> PyResult<VerifyConfig> {
    if !(timeout > 0.0 && timeout.is_finite()) {
        return Err(PyValueError::new_err("timeout must be positive"));
    }
    let mut cfg = VerifyConfig {
        timeout: Duration::from_secs_f64(timeout),
        prune,
        ..VerifyConfig::default()
    };
    if let Some(j) = jobs {
        cfg.jobs = j.max(1);
    }
    if let Some(cmd) = solver {
        cfg.solver = SolverConfig::from_command(cmd).ok_or_else(|| PyValueError::new_err("empty solver command"))?;
    }
    cfg.solver.timeout = cfg.solver.timeout.min(cfg.timeout);
    Ok(cfg)
}

#[pymethods]
impl Corpus {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        let bundles = ingest::load_bundle(&path).map_err(value_err)?;
        Ok(Corpus { bundles })
    }

    fn contract_ids(&self) -> Vec<String> {
        self.bundles.iter().map(|b| b.contract_id.clone()).collect()
    }

    /// Selectors of the dispatcher entries of one contract.
    fn functions(&self, contract_id: &str) -> PyResult<Vec<String>> {
        let b = self
            .bundles
            .get(contract_id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown contract `{contract_id}`")))?;
        Ok(b.cfg.function_entries.keys().map(|s| s.to_string()).collect())
    }

    /// Verifies one warning. `selector` is hex or a signature such as `withdraw(uint256)`.
    #[pyo3(signature = (contract_id, selector, timeout = 120.0, prune = true, solver = None))]
    fn verify(
        &self,
        py: Python<'_>,
        contract_id: &str,
        selector: &str,
        timeout: f64,
        prune: bool,
        solver: Option<&str>,
    ) -> PyResult<Verdict> {
        let sel = parse_selector(selector)?;
        let cfg = config(timeout, prune, None, solver)?;
        let inner = py.allow_threads(|| verifier::verify_warning(&self.bundles, contract_id, sel, &cfg));
        Ok(Verdict { inner })
    }

    /// Verifies every warning of the given report files.
    #[pyo3(signature = (reports, timeout = 120.0, prune = true, jobs = None, solver = None))]
    fn verify_reports(
        &self,
        py: Python<'_>,
        reports: Vec<PathBuf>,
        timeout: f64,
        prune: bool,
        jobs: Option<usize>,
        solver: Option<&str>,
    ) -> PyResult<Vec<Verdict>> {
        let mut all = Vec::new();
        for p in &reports {
            all.extend(ingest::ingest_reports(p).map_err(value_err)?);
        }
        for r in &all {
            self.bundles.validate_report(r).map_err(value_err)?;
        }
        let cfg = config(timeout, prune, jobs, solver)?;
        let out = py.allow_threads(|| verifier::verify(&self.bundles, &all, &cfg));
        Ok(out.into_iter().map(|inner| Verdict { inner }).collect())
    }
}

/// Precision, recall and F1 from confusion counts.
#[pyclass(frozen, module = "pyreverify")]
struct Metrics {
    counts: harness::Metrics,
}

#[pymethods]
impl Metrics {
    #[new]
    #[pyo3(signature = (tp, fp, fn_, tn))]
    fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Metrics {
            counts: harness::Metrics::from_counts(tp, fp, fn_, tn),
        }
    }

    /// One-decimal percentage strings; None when undefined.
    #[getter]
    fn precision(&self) -> Option<String> {
        self.counts.precision().map(harness::percent)
    }

    #[getter]
    fn recall(&self) -> Option<String> {
        self.counts.recall().map(harness::percent)
    }

    #[getter]
    fn f1(&self) -> Option<String> {
        self.counts.f1().map(harness::percent)
    }

    fn table(&self) -> String {
        self.counts.table()
    }
}

/// Scores verdicts against `{contract_id: vulnerable}` labels.
#[pyfunction]
fn score(verdicts: Vec<PyRef<'_, Verdict>>, truth: std::collections::BTreeMap<String, bool>) -> PyResult<Metrics> {
    let vs: Vec<verifier::Verdict> = verdicts.iter().map(|v| v.inner.clone()).collect();
    let inner = harness::score(&vs, &truth).map_err(value_err)?;
    Ok(Metrics { counts: inner })
}

#[pyfunction]
#[pyo3(signature = (tools, sizes = vec![2, 4, 6, 8]))]
fn enumerate_combos(tools: Vec<String>, sizes: Vec<usize>) -> PyResult<Vec<Vec<String>>> {
    harness::enumerate_combos(&tools, &sizes).map_err(value_err)
}

/// OR-merges report files for the given tools; returns the merged reports as JSON.
#[pyfunction]
fn merge_reports(reports: Vec<PathBuf>, combo: Vec<String>) -> PyResult<String> {
    let mut all = Vec::new();
    for p in &reports {
        all.extend(ingest::ingest_reports(p).map_err(value_err)?);
    }
    let merged = harness::merge_reports(&all, &combo).map_err(value_err)?;
    serde_json::to_string(&merged).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
fn selector(signature: &str) -> String {
    Selector::from_signature(signature).to_string()
}

#[pyfunction]
fn assemble(text: &str) -> PyResult<Vec<u8>> {
    evm::assemble(text).map_err(value_err)
}

#[pyfunction]
fn disassemble(code: Vec<u8>) -> PyResult<Vec<String>> {
    let instrs = evm::disassemble(&code).map_err(value_err)?;
    Ok(instrs.iter().map(|i| format!("{:04x}: {i}", i.pc)).collect())
}

#[pymodule]
fn pyreverify(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Verdict>()?;
    m.add_class::<Metrics>()?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_combos, m)?)?;
    m.add_function(wrap_pyfunction!(merge_reports, m)?)?;
    m.add_function(wrap_pyfunction!(selector, m)?)?;
    m.add_function(wrap_pyfunction!(assemble, m)?)?;
    m.add_function(wrap_pyfunction!(disassemble, m)?)?;
    Ok(())
}

//! Python bindings.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use odecert::certifier::{Assumption, Certificate, Certifier, Domain, Solution};
use odecert::parser::{self, OdeSystem};
use odecert::refuter::{valuation_map, Refutation, Refuter, DEFAULT_SEED};
use odecert::solver::{self, BackendSpec, SolveStatus};
use odecert::{canon, corpus, deriv, suite};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn system(text: &str) -> PyResult<OdeSystem> {
    parser::parse_system(text).map_err(value_err)
}

fn assumptions(sys: &OdeSystem, texts: &[String]) -> PyResult<Vec<Assumption>> {
    let ctx = sys.context();
    texts
        .iter()
        .map(|a| Assumption::parse(a, &ctx).map_err(value_err))
        .collect()
}

/// Outcome of certifying one candidate solution.
#[pyclass(name = "Certificate", frozen)]
struct PyCertificate {
    inner: Certificate,
}

#[pymethods]
impl PyCertificate {
    #[getter]
    fn status(&self) -> String {
        self.inner.status.to_string()
    }

    #[getter]
    fn domain(&self) -> String {
        self.inner.domain.to_string()
    }

    /// `(condition, disposition)` pairs.
    #[getter]
    fn conditions(&self) -> Vec<(String, String)> {
        self.inner
            .conditions
            .iter()
            .map(|c| (c.condition.to_string(), c.disposition.to_string()))
            .collect()
    }

    #[getter]
    fn unresolved(&self) -> Vec<String> {
        self.inner.unresolved().map(|c| c.condition.to_string()).collect()
    }

    /// Per component: verdict, expected and computed derivative.
    #[getter]
    fn components(&self) -> Vec<BTreeMap<String, String>> {
        self.inner
            .components
            .iter()
            .map(|c| {
                let mut m = BTreeMap::new();
                m.insert("var".into(), c.var.clone());
                m.insert("verdict".into(), c.verdict.to_string());
                m.insert("expected".into(), c.expected.to_string());
                if let Some(computed) = &c.computed {
                    m.insert("computed".into(), computed.to_string());
                }
                m.insert("goal_ops".into(), c.goal_ops.to_string());
                m
            })
            .collect()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("<Certificate {}>", self.inner.status)
    }
}

/// Certifies `solution` (`{var: expr}`) against `system`.
#[pyfunction]
#[pyo3(signature = (system_text, solution, domain=None, assume=Vec::new(), name=None))]
fn certify(
    system_text: &str,
    solution: BTreeMap<String, String>,
    domain: Option<&str>,
    assume: Vec<String>,
    name: Option<String>,
) -> PyResult<PyCertificate> {
    let sys = system(system_text)?;
    let bindings: Vec<String> = solution.iter().map(|(v, e)| format!("{v}={e}")).collect();
    let mut sol =
        Solution::parse_bindings(&sys, bindings.iter().map(String::as_str)).map_err(value_err)?;
    if let Some(d) = domain {
        sol.domain = Domain::parse(d, &sys.context()).map_err(value_err)?;
    }
    let assume = assumptions(&sys, &assume)?;
    let mut certifier = Certifier::new();
    if let Some(n) = name {
        certifier = certifier.named(n);
    }
    let inner = certifier.certify(&sys, &sol, &assume).map_err(value_err)?;
    Ok(PyCertificate { inner })
}

/// Solves with a backend. Returns `{"status", "solutions", "detail"}` where
/// each solution is `{"bindings": {var: expr}, "domain", "conditions"}`.
#[pyfunction]
#[pyo3(signature = (system_text, backend="builtin", assume=Vec::new(), timeout=30.0))]
fn solve(
    py: Python<'_>,
    system_text: &str,
    backend: &str,
    assume: Vec<String>,
    timeout: f64,
) -> PyResult<Py<PyAny>> {
    let sys = system(system_text)?;
    let assume = assumptions(&sys, &assume)?;
    if !(timeout.is_finite() && timeout > 0.0) {
        return Err(PyValueError::new_err("timeout must be positive"));
    }
    let spec: BackendSpec = backend.parse().map_err(value_err)?;
    let spec = spec
        .with_timeout(Duration::from_secs_f64(timeout))
        .map_err(value_err)?;
    let result = py.detach(|| solver::solve(&sys, &spec, &assume));
    let doc = match &result.status {
        SolveStatus::Solved(cands) => serde_json::json!({
            "status": "solved",
            "solutions": cands.iter().map(|c| serde_json::json!({
                "bindings": c.solution.bindings.iter()
                    .map(|(v, e)| (v.clone(), e.to_string()))
                    .collect::<BTreeMap<_, _>>(),
                "domain": c.solution.domain.to_string(),
                "conditions": c.conditions.iter().map(ToString::to_string).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        }),
        SolveStatus::Unsolved(d) => serde_json::json!({"status": "unsolved", "detail": d}),
        SolveStatus::BackendError(e) => {
            serde_json::json!({"status": "backend-error", "detail": e.to_string()})
        }
    };
    json_to_py(py, &doc)
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (v.to_string(),))?.unbind())
}

/// Derivative of a closed-form body: `(derivative, conditions, rules)`.
#[pyfunction]
fn differentiate(body: &str) -> PyResult<(String, Vec<String>, Vec<String>)> {
    let e = parser::parse_expr(body).map_err(value_err)?;
    let d = deriv::differentiate(&e).map_err(value_err)?;
    Ok((
        d.derivative.to_string(),
        d.conditions.iter().map(|c| c.condition.to_string()).collect(),
        d.trace.rule_ids().into_iter().map(String::from).collect(),
    ))
}

/// Canonical form of an expression.
#[pyfunction]
fn simplify(expr: &str) -> PyResult<String> {
    let e = parser::parse_expr(expr).map_err(value_err)?;
    Ok(canon::simplify(&e).map_err(value_err)?.to_string())
}

/// Whether two expressions have the same canonical form.
#[pyfunction]
fn equal(a: &str, b: &str) -> PyResult<bool> {
    let a = parser::parse_expr(a).map_err(value_err)?;
    let b = parser::parse_expr(b).map_err(value_err)?;
    canon::equal(&a, &b).map_err(value_err)
}

/// Searches for a point where `lhs` and `rhs` differ. Returns the point as
/// `{symbol: value}` or `None`.
#[pyfunction]
#[pyo3(signature = (lhs, rhs, trials=1000, seed=DEFAULT_SEED))]
fn refute(lhs: &str, rhs: &str, trials: usize, seed: u64) -> PyResult<Option<BTreeMap<String, String>>> {
    let a = parser::parse_expr(lhs).map_err(value_err)?;
    let b = parser::parse_expr(rhs).map_err(value_err)?;
    match Refuter::new(seed, trials).refute_equality(&a, &b, &[]).map_err(value_err)? {
        Refutation::Counterexample(c) => Ok(Some(valuation_map(&c.valuation))),
        Refutation::NoneFound { .. } => Ok(None),
    }
}

/// `(raw, duplicates, unique, simple, complex, skipped)` for a directory.
#[pyfunction]
fn corpus_counts(root: PathBuf) -> PyResult<(usize, usize, usize, usize, usize, usize)> {
    let c = corpus::extract_corpus(&root).map_err(|e| PyOSError::new_err(e.to_string()))?;
    Ok((
        c.raw,
        c.duplicates(),
        c.unique(),
        c.count(corpus::Class::Simple),
        c.count(corpus::Class::Complex),
        c.skipped,
    ))
}

/// Runs the bundled eighteen-case table; one JSON document per row.
#[pyfunction]
#[pyo3(signature = (backend="builtin", jobs=4))]
fn run_table(py: Python<'_>, backend: &str, jobs: usize) -> PyResult<Vec<String>> {
    let spec: BackendSpec = backend.parse().map_err(value_err)?;
    let report = py.detach(|| suite::run_suite(&suite::table_suite(), &spec, jobs));
    Ok(report
        .rows
        .iter()
        .map(|r| serde_json::to_string(r).expect("rows serialise"))
        .collect())
}

#[pymodule]
fn odecert_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCertificate>()?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(differentiate, m)?)?;
    m.add_function(wrap_pyfunction!(simplify, m)?)?;
    m.add_function(wrap_pyfunction!(equal, m)?)?;
    m.add_function(wrap_pyfunction!(refute, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_counts, m)?)?;
    m.add_function(wrap_pyfunction!(run_table, m)?)?;
    Ok(())
}

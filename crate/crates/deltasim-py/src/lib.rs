//! Python bindings for the deltasim core.
//!
//! Exposes the four CRDTs as replica-handle classes plus module-level entry
//! points for the scenario runner, the exhaustive oracle, and the lattice-law
//! suite. Build with `cargo build -p deltasim-py --release`; the smoke test
//! under `python/` locates the produced cdylib by itself.

use std::collections::BTreeSet;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use deltasim::checker::{brute_force_oracle, lattice_law_suite};
use deltasim::crdt::{JoinSemilattice, ReplicaId, ReplicaSet};
use deltasim::message::{ClientOp, CrdtKind, CrdtState, QueryValue, Style};
use deltasim::reduce::OpMachine;
use deltasim::runner::{run_scenario, sweep};
use deltasim::scenario::parse_scenario;

fn parse_kind(kind: &str) -> PyResult<CrdtKind> {
    kind.parse().map_err(PyValueError::new_err)
}

fn parse_style(style: &str) -> PyResult<Style> {
    style.parse().map_err(PyValueError::new_err)
}

fn query_to_py(py: Python<'_>, q: QueryValue) -> Py<PyAny> {
    match q {
        QueryValue::Count(n) => n.into_pyobject(py).unwrap().into_any().unbind(),
        QueryValue::Int(n) => n.into_pyobject(py).unwrap().into_any().unbind(),
        QueryValue::Elements(xs) => {
            let list: Vec<String> = xs.into_iter().collect();
            list.into_pyobject(py).unwrap().into_any().unbind()
        }
    }
}

/// One replica of a CRDT in a chosen wire style.
///
/// `update(op, arg)` prepares the wire message for a local operation,
/// applies it locally, and returns its canonical representation; `deliver`
/// applies a message received from another replica.
#[pyclass]
struct Replica {
    machine: OpMachine,
}

#[pymethods]
impl Replica {
    #[new]
    #[pyo3(signature = (kind, replica, replicas, style = "delta"))]
    fn new(kind: &str, replica: u32, replicas: u32, style: &str) -> PyResult<Self> {
        let kind = parse_kind(kind)?;
        let style = parse_style(style)?;
        let machine = OpMachine::new(kind, style, ReplicaId::new(replica), ReplicaSet::new(replicas))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Replica { machine })
    }

    /// Apply a local operation; returns the wire message other replicas
    /// should deliver.
    #[pyo3(signature = (op, arg = None))]
    fn update(&mut self, op: &str, arg: Option<String>) -> PyResult<String> {
        let op = match (op, arg) {
            ("inc", None) => ClientOp::Inc,
            ("dec", None) => ClientOp::Dec,
            ("insert", Some(x)) => ClientOp::Insert(x),
            ("add", Some(x)) => ClientOp::Add(x),
            ("remove", Some(x)) => ClientOp::Remove(x),
            (other, _) => {
                return Err(PyValueError::new_err(format!(
                    "unknown or malformed operation `{other}`"
                )))
            }
        };
        let msg = self
            .machine
            .prepare(&op)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        self.machine
            .effect(&msg)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(msg.to_string())
    }

    /// Merge another replica's state into this one (state-typed styles only).
    fn merge(&mut self, other: &Replica) -> PyResult<()> {
        let state = other
            .machine
            .lattice_state()
            .ok_or_else(|| PyValueError::new_err("native op machines have no lattice state"))?
            .clone();
        self.machine
            .merge_state(&state)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// The client-visible readout: an int for counters, a sorted list for
    /// sets.
    fn query(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let q = self
            .machine
            .query()
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(query_to_py(py, q))
    }

    /// Canonical state representation.
    fn state(&self) -> String {
        self.machine.state().to_string()
    }

    /// Whether this replica's state is dominated by the other's.
    fn leq(&self, other: &Replica) -> PyResult<bool> {
        let (a, b) = (self.machine.lattice_state(), other.machine.lattice_state());
        match (a, b) {
            (Some(a), Some(b)) => {
                let joined = a
                    .join(b)
                    .map_err(|e| PyValueError::new_err(e.to_string()))?;
                Ok(&joined == b)
            }
            _ => Err(PyValueError::new_err(
                "native op machines have no lattice order",
            )),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Replica(kind={}, style={}, id={}, state={})",
            self.machine.kind(),
            self.machine.style(),
            self.machine.id(),
            self.machine.state()
        )
    }
}

/// Join two canonical grow-only counter states given as {replica: count}
/// dicts; returns the joined dict. Convenience for lattice experiments.
#[pyfunction]
fn join_counters(
    a: std::collections::BTreeMap<u32, u64>,
    b: std::collections::BTreeMap<u32, u64>,
) -> std::collections::BTreeMap<u32, u64> {
    use deltasim::crdt::GCounterState;
    let of = |m: &std::collections::BTreeMap<u32, u64>| {
        GCounterState::from_counts(m.iter().map(|(&i, &n)| (ReplicaId::new(i), n)))
    };
    of(&a)
        .join(&of(&b))
        .entries()
        .map(|(id, n)| (id.index() as u32, n))
        .collect()
}

/// Parse and run a scenario from text. Returns a dict with exit_code,
/// verdict, summary, transcript, converged, and per-replica queries.
#[pyfunction]
#[pyo3(signature = (text, seed = None))]
fn run_scenario_text(py: Python<'_>, text: &str, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let sc = parse_scenario(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let artifacts = run_scenario(&sc, seed).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("exit_code", artifacts.exit_code)?;
    dict.set_item("converged", artifacts.converged)?;
    dict.set_item("events", artifacts.events)?;
    dict.set_item("verdict", artifacts.verdict_text())?;
    dict.set_item("summary", artifacts.summary.clone())?;
    dict.set_item("transcript", artifacts.transcript.clone())?;
    let queries: Vec<String> = artifacts
        .verdict
        .details
        .iter()
        .map(|d| d.query.clone())
        .collect();
    dict.set_item("queries", queries)?;
    Ok(dict.into_any().unbind())
}

/// Run a scenario across an inclusive seed range; returns (passes, runs,
/// failing_seeds).
#[pyfunction]
fn sweep_scenario_text(text: &str, first: u64, last: u64) -> PyResult<(u64, u64, Vec<u64>)> {
    let sc = parse_scenario(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = sweep(&sc, first, last).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((report.passes, report.runs, report.failing_seeds))
}

/// Exhaustively check convergence over every delivery schedule at small
/// scope; returns (converged, schedules).
#[pyfunction]
#[pyo3(signature = (kind, replicas, ops, max_dup = 1, style = "delta"))]
fn oracle(kind: &str, replicas: u32, ops: u32, max_dup: u32, style: &str) -> PyResult<(bool, u64)> {
    let report = brute_force_oracle(parse_kind(kind)?, parse_style(style)?, replicas, ops, max_dup)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((report.converged(), report.schedules))
}

/// Randomized lattice-law suite; returns (passed, report_text).
#[pyfunction]
#[pyo3(signature = (kind, trials = 1000, seed = 0))]
fn laws(kind: &str, trials: u32, seed: u64) -> PyResult<(bool, String)> {
    let report = lattice_law_suite(parse_kind(kind)?, trials, seed);
    Ok((report.passed(), report.to_string()))
}

/// All CRDT kinds the library ships.
#[pyfunction]
fn kinds() -> Vec<String> {
    CrdtKind::ALL.iter().map(|k| k.to_string()).collect()
}

/// Bottom-state representations per kind, mostly useful for doctests.
#[pyfunction]
fn bottom(kind: &str) -> PyResult<String> {
    Ok(CrdtState::bottom(parse_kind(kind)?).to_string())
}

/// Elements helper: canonical sorted representation of a set readout.
#[pyfunction]
fn canonical_elements(mut elements: Vec<String>) -> Vec<String> {
    let set: BTreeSet<String> = elements.drain(..).collect();
    set.into_iter().collect()
}

#[pymodule]
fn deltasim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Replica>()?;
    m.add_function(wrap_pyfunction!(join_counters, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario_text, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_scenario_text, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(laws, m)?)?;
    m.add_function(wrap_pyfunction!(kinds, m)?)?;
    m.add_function(wrap_pyfunction!(bottom, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_elements, m)?)?;
    Ok(())
}

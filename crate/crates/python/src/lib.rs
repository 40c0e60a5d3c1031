use mso_workbench::composition::{self, FdConfig, FdTheorem};
use mso_workbench::falsifier;
use mso_workbench::formula::{eval_direct, eval_on_theory};
use mso_workbench::scattered::{self, OrderTerm};
use mso_workbench::synthesis::{self, TreeTerm, WellOrderCertificate};
use mso_workbench::theory::compute_theory;
use mso_workbench::{FinStructure, Formula, Subset, Theory};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyList, PyString};
use serde_json::Value;

create_exception!(mso_workbench_py, WorkbenchError, PyValueError);

fn wrap(e: mso_workbench::Error) -> PyErr {
    WorkbenchError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => PyFloat::new(py, n.as_f64().unwrap_or(f64::NAN)).into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(xs) => {
            let list = PyList::empty(py);
            for x in xs {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn subsets(tuple: Vec<Vec<usize>>) -> Vec<Subset> {
    tuple.into_iter().map(Subset::from_indices).collect()
}

/// A finite chain, tree or pure set with named predicates.
#[pyclass(name = "Structure", frozen)]
struct PyStructure(FinStructure);

#[pymethods]
impl PyStructure {
    #[staticmethod]
    fn chain(n: usize) -> Self {
        PyStructure(FinStructure::chain(n))
    }

    #[staticmethod]
    fn pure_set(n: usize) -> Self {
        PyStructure(FinStructure::pure_set(n))
    }

    /// Parent index per node (None for roots); parents need not precede children.
    #[staticmethod]
    fn tree(parents: Vec<Option<usize>>) -> PyResult<Self> {
        FinStructure::tree_from_parents(&parents).map(PyStructure).map_err(wrap)
    }

    #[staticmethod]
    fn from_json(src: &str) -> PyResult<Self> {
        FinStructure::from_json(src).map(PyStructure).map_err(wrap)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    /// A copy carrying predicates `P0, P1, ...` given as index lists.
    fn with_tuple(&self, tuple: Vec<Vec<usize>>) -> PyResult<Self> {
        self.0.clone().with_tuple(&subsets(tuple)).map(PyStructure).map_err(wrap)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind().name()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.0.ids().to_vec()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.0.fingerprint()
    }

    fn leq(&self, i: usize, j: usize) -> bool {
        self.0.leq(i, j)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Structure({}, {} elements)", self.0.kind(), self.0.len())
    }
}

/// A partial theory `Th^n(s; A)`.
#[pyclass(name = "Theory", frozen, eq, hash)]
#[derive(PartialEq, Eq, Hash)]
struct PyTheory(Theory);

#[pymethods]
impl PyTheory {
    #[staticmethod]
    fn from_json(src: &str) -> PyResult<Self> {
        Theory::from_json(src).map(PyTheory).map_err(wrap)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.0.rank()
    }

    #[getter]
    fn arity(&self) -> usize {
        self.0.arity()
    }

    #[getter]
    fn content_hash(&self) -> String {
        self.0.content_hash()
    }

    fn reduce_depth(&self, n: usize) -> PyResult<Self> {
        self.0.reduce_depth(n).map(PyTheory).map_err(wrap)
    }

    /// Theory of the concatenation of two chains.
    fn __add__(&self, other: &PyTheory) -> PyResult<Self> {
        composition::sum(&self.0, &other.0).map(PyTheory).map_err(wrap)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

#[pyfunction]
#[pyo3(signature = (structure, depth, tuple = None))]
fn theory(structure: &PyStructure, depth: usize, tuple: Option<Vec<Vec<usize>>>) -> PyResult<PyTheory> {
    let tuple = tuple.map(subsets).unwrap_or_else(|| structure.0.predicate_tuple());
    compute_theory(&structure.0, &tuple, depth).map(PyTheory).map_err(wrap)
}

/// Truth of a formula s-expression under `tuple`, evaluated directly.
#[pyfunction]
fn evaluate(formula: &str, structure: &PyStructure, tuple: Vec<Vec<usize>>) -> PyResult<bool> {
    let f = Formula::parse(formula).map_err(wrap)?;
    eval_direct(&f, &structure.0, &subsets(tuple)).map_err(wrap)
}

/// Truth of a formula read off a theory of sufficient depth.
#[pyfunction]
fn evaluate_on_theory(formula: &str, theory: &PyTheory) -> PyResult<bool> {
    let f = Formula::parse(formula).map_err(wrap)?;
    eval_on_theory(&f, &theory.0).map_err(wrap)
}

/// Hausdorff degree of an order term: an int, "≥ ω" or "not scattered".
#[pyfunction]
fn hdeg<'py>(py: Python<'py>, term: &str) -> PyResult<Bound<'py, PyAny>> {
    let t = OrderTerm::parse(term).map_err(wrap)?;
    to_py(py, &serde_json::to_value(scattered::hdeg(&t)).map_err(|e| wrap(e.into()))?)
}

#[pyfunction]
#[pyo3(signature = (n, starred = false))]
fn catalog_term(n: usize, starred: bool) -> PyResult<String> {
    scattered::catalog_term(n, starred).map(|t| t.to_string()).map_err(wrap)
}

#[pyfunction]
fn rank_map(structure: &PyStructure) -> PyResult<Vec<usize>> {
    synthesis::rank_map(&structure.0).map(|r| r.0).map_err(wrap)
}

#[pyfunction]
fn classify<'py>(py: Python<'py>, term: &str) -> PyResult<Bound<'py, PyAny>> {
    let t = TreeTerm::parse(term).map_err(wrap)?;
    to_py(py, &serde_json::to_value(synthesis::classify(&t)).map_err(|e| wrap(e.into()))?)
}

/// Certificate JSON for a definable well-order of a finite tree.
#[pyfunction]
fn synth_tree(structure: &PyStructure) -> PyResult<String> {
    synthesis::synth_tree_wellorder(&structure.0).map(|c| c.to_json()).map_err(wrap)
}

#[pyfunction]
fn verify_certificate<'py>(py: Python<'py>, structure: &PyStructure, cert: &str) -> PyResult<Bound<'py, PyAny>> {
    let c = WellOrderCertificate::from_json(cert).map_err(wrap)?;
    let report = synthesis::verify_certificate(&structure.0, &c);
    to_py(py, &serde_json::to_value(report).map_err(|e| wrap(e.into()))?)
}

/// Ids of the elements in the order a certificate defines.
#[pyfunction]
fn certificate_order(structure: &PyStructure, cert: &str) -> PyResult<Option<Vec<String>>> {
    let c = WellOrderCertificate::from_json(cert).map_err(wrap)?;
    let ev = c.evaluator(&structure.0).map_err(wrap)?;
    Ok(ev.order().map(|o| o.into_iter().map(|i| structure.0.id(i).to_string()).collect()))
}

/// First pair `x, y` indiscernible inside `{x, y}` at depth `depth`, or None.
#[pyfunction]
#[pyo3(signature = (structure, depth, params = None))]
fn find_indiscernible_pair<'py>(
    py: Python<'py>,
    structure: &PyStructure,
    depth: usize,
    params: Option<Vec<Vec<usize>>>,
) -> PyResult<Bound<'py, PyAny>> {
    let params = params.map(subsets).unwrap_or_else(|| structure.0.predicate_tuple());
    match falsifier::find_indiscernible_pair(&structure.0, &params, depth).map_err(wrap)? {
        Some(w) => to_py(py, &w.to_json(&structure.0, &params)),
        None => Ok(py.None().into_bound(py)),
    }
}

/// Sampled functional-dependency check for one composition theorem.
#[pyfunction]
#[pyo3(signature = (theorem, n, trials, seed, m = None, max_elements = 6))]
fn verify_fd<'py>(
    py: Python<'py>,
    theorem: &str,
    n: usize,
    trials: usize,
    seed: u64,
    m: Option<usize>,
    max_elements: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let th: FdTheorem = theorem.parse().map_err(wrap)?;
    let mut cfg = FdConfig::new(th, n, trials, seed);
    if let Some(m) = m {
        cfg.m = m;
    }
    cfg.max_elements = max_elements;
    let report = composition::verify_fd(&cfg).map_err(wrap)?;
    to_py(py, &serde_json::to_value(report).map_err(|e| wrap(e.into()))?)
}

#[pymodule]
fn mso_workbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", mso_workbench::VERSION)?;
    m.add("WorkbenchError", m.py().get_type::<WorkbenchError>())?;
    m.add_class::<PyStructure>()?;
    m.add_class::<PyTheory>()?;
    m.add_function(wrap_pyfunction!(theory, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_on_theory, m)?)?;
    m.add_function(wrap_pyfunction!(hdeg, m)?)?;
    m.add_function(wrap_pyfunction!(catalog_term, m)?)?;
    m.add_function(wrap_pyfunction!(rank_map, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(synth_tree, m)?)?;
    m.add_function(wrap_pyfunction!(verify_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(certificate_order, m)?)?;
    m.add_function(wrap_pyfunction!(find_indiscernible_pair, m)?)?;
    m.add_function(wrap_pyfunction!(verify_fd, m)?)?;
    Ok(())
}

//! Python bindings. Build with `--features extension-module` and import the
//! shared library as `canodual`.

use canodual::chain::{self, Atom, AtomFilter, Chain};
use canodual::dual::{self, DualVector};
use canodual::energy::{self, Configuration, LjParams};
use canodual::fixtures::Fixture;
use canodual::io::{self, ReportDocument};
use canodual::mdgp;
use canodual::solver::{self, SearchBox, SolverConfig};
use canodual::{QuadraticMap, QuarticTerm};
use nalgebra::{DMatrix, DVector, Vector3};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> PyResult<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(format!("{what}: expected a {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn vector(v: &[f64], n: usize, what: &str) -> PyResult<DVector<f64>> {
    if v.len() != n {
        return Err(PyValueError::new_err(format!("{what}: expected length {n}, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

/// `(alpha, A, b, c)`
type TermTuple = (f64, Vec<Vec<f64>>, Vec<f64>, f64);

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// `P(x) = Σ ½αᵢ(½xᵀAᵢx + bᵢᵀx + cᵢ)² + ½xᵀQx − fᵀx`.
#[pyclass(name = "QuarticProgram", module = "canodual", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyQuarticProgram {
    pub inner: canodual::QuarticProgram,
}

#[pymethods]
impl PyQuarticProgram {
    /// `terms` is a list of `(alpha, A, b, c)` tuples.
    #[new]
    fn new(
        n: usize,
        terms: Vec<TermTuple>,
        q: Vec<Vec<f64>>,
        f: Vec<f64>,
    ) -> PyResult<Self> {
        let terms = terms
            .iter()
            .enumerate()
            .map(|(i, (alpha, a, b, c))| {
                Ok(QuarticTerm::new(
                    *alpha,
                    QuadraticMap::new(
                        matrix(a, n, &format!("terms[{i}].A"))?,
                        vector(b, n, &format!("terms[{i}].b"))?,
                        *c,
                    ),
                ))
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = canodual::QuarticProgram::checked(n, terms, matrix(&q, n, "Q")?, vector(&f, n, "f")?)
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Parses an instance document (quartic or MDGP).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc = io::parse_instance(text).map_err(value_err)?;
        Ok(Self {
            inner: doc.program().map_err(value_err)?,
        })
    }

    /// One of the bundled instances, e.g. `"doublewell"` or `"3nvh"`.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        let f = Fixture::from_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown fixture {name:?}")))?;
        Ok(Self { inner: f.program() })
    }

    fn to_json(&self) -> String {
        io::InstanceDocument::quartic(&self.inner).to_json()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn term_count(&self) -> usize {
        self.inner.term_count()
    }

    fn eval_primal(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eval_primal(&DVector::from_vec(x)).map_err(value_err)
    }

    fn grad_primal(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad_primal(&DVector::from_vec(x)).map(|g| to_vec(&g)).map_err(value_err)
    }

    fn canonical_measure(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner
            .canonical_measure(&DVector::from_vec(x))
            .map(|g| to_vec(&g))
            .map_err(value_err)
    }

    fn eval_dual(&self, sigma: Vec<f64>) -> PyResult<f64> {
        dual::eval_dual(&self.inner, &DualVector::from(sigma)).map_err(value_err)
    }

    fn grad_dual(&self, sigma: Vec<f64>) -> PyResult<Vec<f64>> {
        dual::grad_dual(&self.inner, &DualVector::from(sigma))
            .map(|g| to_vec(&g))
            .map_err(value_err)
    }

    fn recover_primal(&self, sigma: Vec<f64>) -> PyResult<Vec<f64>> {
        dual::recover_primal(&self.inner, &DualVector::from(sigma))
            .map(|g| to_vec(&g))
            .map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("QuarticProgram(n={}, m={})", self.inner.dim(), self.inner.term_count())
    }
}

fn report_dict<'py>(py: Python<'py>, doc: &ReportDocument) -> PyResult<Bound<'py, PyAny>> {
    let json = py.import("json")?;
    json.call_method1("loads", (doc.to_json(),))
}

/// Solves the program; returns the JSON report as a dict.
#[pyfunction]
#[pyo3(signature = (program, seed = 0, multistart_count = 64, search_box = None))]
fn solve<'py>(
    py: Python<'py>,
    program: &PyQuarticProgram,
    seed: u64,
    multistart_count: usize,
    search_box: Option<(Vec<f64>, Vec<f64>)>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SolverConfig {
        seed,
        multistart_count,
        search_box: search_box.map(|(lo, hi)| SearchBox::new(lo, hi)),
        ..SolverConfig::default()
    };
    cfg.check(program.inner.term_count()).map_err(value_err)?;
    let prog = program.inner.clone();
    let report = py.detach(|| solver::solve(&prog, &cfg));
    report_dict(py, &ReportDocument::from_report(&program.to_json(), &report, false))
}

/// Solves an MDGP instance document; the report gains `sensors` and
/// `violations` when a certificate is found.
#[pyfunction]
#[pyo3(signature = (instance_json, seed = 0, threshold = mdgp::DEFAULT_REPORT_THRESHOLD))]
fn solve_mdgp<'py>(py: Python<'py>, instance_json: &str, seed: u64, threshold: f64) -> PyResult<Bound<'py, PyAny>> {
    let doc = io::parse_instance(instance_json).map_err(value_err)?;
    let io::Problem::Mdgp(spec) = &doc.problem else {
        return Err(PyValueError::new_err("not an mdgp instance"));
    };
    let inst = spec.to_instance().map_err(value_err)?;
    let mut cfg = doc.solver_config();
    cfg.seed = seed;
    let sol = py.detach(|| mdgp::solve_mdgp(&inst, &cfg)).map_err(value_err)?;
    let mut rep = ReportDocument::from_report(instance_json, &sol.report, false);
    if let Some(best) = &sol.report.best {
        rep.sensors = Some(mdgp::split_sensors(&best.x).iter().map(|p| [p.x, p.y, p.z]).collect());
        rep.violations = Some(mdgp::violation_report(&inst, &best.x, threshold).map_err(value_err)?);
    }
    report_dict(py, &rep)
}

#[pyfunction]
fn fixture_names() -> Vec<&'static str> {
    Fixture::ALL.iter().map(|f| f.name()).collect()
}

#[pyfunction]
fn fixture_json(name: &str) -> PyResult<&'static str> {
    Fixture::from_name(name)
        .map(|f| f.text())
        .ok_or_else(|| PyValueError::new_err(format!("unknown fixture {name:?}")))
}

#[pyfunction]
#[pyo3(signature = (r, epsilon = 1.0, sigma = 1.0))]
fn lj_pair(r: f64, epsilon: f64, sigma: f64) -> PyResult<f64> {
    let p = LjParams::new(epsilon, sigma).map_err(value_err)?;
    energy::lj_pair(r, &p).map_err(value_err)
}

fn configuration(positions: Vec<[f64; 3]>) -> PyResult<Configuration> {
    Configuration::reduced(positions.into_iter().map(Vector3::from).collect()).map_err(value_err)
}

/// Reduced-unit cluster energy.
#[pyfunction]
fn lj_cluster_energy(positions: Vec<[f64; 3]>) -> PyResult<f64> {
    energy::lj_cluster_energy(&configuration(positions)?).map_err(value_err)
}

/// Two-stage refinement; returns `(positions, energy)`.
#[pyfunction]
#[pyo3(signature = (positions, steepest_steps = 1000, cg_steps = 1000))]
fn refine(
    py: Python<'_>,
    positions: Vec<[f64; 3]>,
    steepest_steps: usize,
    cg_steps: usize,
) -> PyResult<(Vec<[f64; 3]>, f64)> {
    let cfg = configuration(positions)?;
    let r = py
        .detach(|| energy::refine(&cfg, steepest_steps, cg_steps))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = r.configuration.positions.iter().map(|p| [p.x, p.y, p.z]).collect();
    Ok((out, r.energy))
}

fn chain_from(name: char, atoms: Vec<(String, [f64; 3])>) -> PyResult<Chain> {
    Chain::new(name, atoms.into_iter().map(|(n, p)| Atom::new(n, Vector3::from(p))).collect()).map_err(value_err)
}

/// RMSD without superposition between lists of `(name, [x, y, z])`.
#[pyfunction]
#[pyo3(signature = (a, b, atom_type = None))]
fn rmsd(a: Vec<(String, [f64; 3])>, b: Vec<(String, [f64; 3])>, atom_type: Option<String>) -> PyResult<f64> {
    let filter = atom_type.map_or(AtomFilter::All, AtomFilter::Type);
    chain::rmsd(&chain_from('A', a)?, &chain_from('B', b)?, &filter).map_err(value_err)
}

/// Replicates chain A into a fibril; returns `{chain: [(name, [x, y, z])]}`.
#[pyfunction]
#[pyo3(signature = (atoms, family, levels = 2))]
fn replicate<'py>(
    py: Python<'py>,
    atoms: Vec<(String, [f64; 3])>,
    family: &str,
    levels: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let fam = chain::Family::parse(family).ok_or_else(|| PyValueError::new_err(format!("unknown family {family:?}")))?;
    let model = chain::replicate_fibril(&chain_from('A', atoms)?, &fam.template_sheet(), &fam.stack(), levels)
        .map_err(value_err)?;
    let out = PyDict::new(py);
    for (name, c) in &model.chains {
        let atoms: Vec<(String, [f64; 3])> = c
            .atoms
            .iter()
            .map(|a| (a.name.clone(), [a.position.x, a.position.y, a.position.z]))
            .collect();
        out.set_item(name.to_string(), atoms)?;
    }
    Ok(out)
}

#[pymodule(name = "canodual")]
pub mod canodual_module {
    #[pymodule_export]
    use super::{
        fixture_json, fixture_names, lj_cluster_energy, lj_pair, refine, replicate, rmsd, solve, solve_mdgp,
        PyQuarticProgram,
    };
}

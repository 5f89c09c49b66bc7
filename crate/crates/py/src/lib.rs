//! Python module `edg`: meshes, dof reports, solves, refinement studies and
//! field sampling.

use edg_core::postproc::{ConvergenceTable, Field, FieldEvaluator};
use edg_core::problems::{ProblemSpec, CATALOG};
use edg_core::spaces::{build_spaces, TraceVariant};
use edg_core::study::{self, Discretization};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Samples = (Vec<(f64, f64)>, Vec<f64>);

const QUANTITIES: [&str; 5] = ["q", "p", "y", "z", "u"];

fn err(e: edg_core::Error) -> PyErr {
    use edg_core::Error as E;
    match e {
        E::Numerical(_) | E::Structural(_) => PyRuntimeError::new_err(e.to_string()),
        E::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn variant(method: &str) -> PyResult<TraceVariant> {
    method.parse().map_err(err)
}

fn spec(problem: &str) -> PyResult<ProblemSpec> {
    ProblemSpec::catalog(problem).map_err(err)
}

fn field(name: &str) -> PyResult<Field> {
    name.parse().map_err(err)
}

/// Uniform triangulation of the unit square.
#[pyclass(name = "Mesh", frozen)]
struct PyMesh {
    inner: edg_core::Mesh,
}

#[pymethods]
impl PyMesh {
    #[staticmethod]
    fn uniform_square(level: u32) -> Self {
        Self {
            inner: edg_core::Mesh::build_uniform_square(level),
        }
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.num_vertices()
    }

    #[getter]
    fn num_triangles(&self) -> usize {
        self.inner.num_triangles()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h_global()
    }

    fn vertices(&self) -> Vec<(f64, f64)> {
        self.inner.vertices().iter().map(|p| (p[0], p[1])).collect()
    }

    fn triangles(&self) -> Vec<(usize, usize, usize)> {
        self.inner
            .triangles()
            .iter()
            .map(|t| (t[0], t[1], t[2]))
            .collect()
    }

    /// Space dimensions for `method` and degree `k` on this mesh.
    fn dof_report<'py>(
        &self,
        py: Python<'py>,
        method: &str,
        k: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = build_spaces(&self.inner, variant(method)?, k)
            .map_err(err)?
            .report();
        let d = PyDict::new(py);
        d.set_item("variant", r.variant.as_str())?;
        d.set_item("k", r.k)?;
        d.set_item("level", r.level)?;
        d.set_item("dim_V", r.dim_v)?;
        d.set_item("dim_W", r.dim_w)?;
        d.set_item("dim_Mo", r.dim_mo)?;
        d.set_item("dim_Mbnd", r.dim_mbnd)?;
        d.set_item("monolithic", r.monolithic)?;
        d.set_item("condensed", r.condensed)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(level={:?}, triangles={})",
            self.inner.level(),
            self.inner.num_triangles()
        )
    }
}

/// A solved discretization: coefficient blocks plus field evaluation.
#[pyclass(name = "Solution", frozen)]
struct PySolution {
    inner: Discretization,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.bundle.variant.as_str()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.bundle.k
    }

    #[getter]
    fn level(&self) -> Option<u32> {
        self.inner.bundle.level
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.stats.dim
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.stats.residual
    }

    /// Coefficients of one block: q, y, p, z, yhat_o, zhat_o or u.
    fn block(&self, name: &str) -> PyResult<Vec<f64>> {
        let b = &self.inner.bundle;
        Ok(match name {
            "q" => b.q.clone(),
            "y" => b.y.clone(),
            "p" => b.p.clone(),
            "z" => b.z.clone(),
            "yhat_o" => b.yhat_o.clone(),
            "zhat_o" => b.zhat_o.clone(),
            "u" => b.u.clone(),
            other => return Err(PyValueError::new_err(format!("unknown block `{other}`"))),
        })
    }

    /// Value of `field` (y, z, q_x, q_y, p_x, p_y) at a point of the unit square.
    fn eval(&self, field_name: &str, x: f64, y: f64) -> PyResult<f64> {
        let ev = FieldEvaluator::new(self.inner.view()).map_err(err)?;
        ev.eval(field(field_name)?, [x, y]).map_err(err)
    }

    /// Samples `field` on an m x m grid; returns (points, values).
    fn sample(&self, py: Python<'_>, field_name: &str, m: usize) -> PyResult<Samples> {
        let f = field(field_name)?;
        let g = py
            .detach(|| edg_core::postproc::sample_field(self.inner.view(), f, m))
            .map_err(err)?;
        Ok((g.points.iter().map(|p| (p[0], p[1])).collect(), g.values))
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.bundle.to_json().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(method={}, degree={}, level={:?}, dim={})",
            self.method(),
            self.degree(),
            self.level(),
            self.dim()
        )
    }
}

/// Errors and observed orders per level.
#[pyclass(name = "ConvergenceTable", frozen)]
struct PyConvergenceTable {
    inner: ConvergenceTable,
}

fn quantity(name: &str) -> PyResult<usize> {
    QUANTITIES.iter().position(|q| *q == name).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown quantity `{name}` (expected q, p, y, z or u)"
        ))
    })
}

#[pymethods]
impl PyConvergenceTable {
    #[getter]
    fn levels(&self) -> Vec<u32> {
        self.inner.rows.iter().map(|r| r.level).collect()
    }

    #[getter]
    fn h(&self) -> Vec<f64> {
        self.inner.rows.iter().map(|r| r.h).collect()
    }

    fn errors(&self, name: &str) -> PyResult<Vec<Option<f64>>> {
        Ok(self.inner.column_errors(quantity(name)?))
    }

    fn orders(&self, name: &str) -> PyResult<Vec<Option<f64>>> {
        Ok(self.inner.column_orders(quantity(name)?))
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// Names of the built-in problems.
#[pyfunction]
fn problems() -> Vec<&'static str> {
    CATALOG.to_vec()
}

#[pyfunction]
#[pyo3(signature = (problem, method, degree, level, threads = 0))]
fn solve(
    py: Python<'_>,
    problem: &str,
    method: &str,
    degree: usize,
    level: u32,
    threads: usize,
) -> PyResult<PySolution> {
    let (s, v) = (spec(problem)?, variant(method)?);
    let inner = py
        .detach(|| study::solve_level(&s, v, degree, level, threads))
        .map_err(err)?;
    Ok(PySolution { inner })
}

#[pyfunction]
#[pyo3(signature = (problem, method, degree, levels, reference_level = 7, threads = 0))]
fn convergence_study(
    py: Python<'_>,
    problem: &str,
    method: &str,
    degree: usize,
    levels: (u32, u32),
    reference_level: u32,
    threads: usize,
) -> PyResult<PyConvergenceTable> {
    let (s, v) = (spec(problem)?, variant(method)?);
    let inner = py
        .detach(|| {
            study::convergence_study(&s, v, degree, levels.0..=levels.1, reference_level, threads)
        })
        .map_err(err)?;
    Ok(PyConvergenceTable { inner })
}

#[pyfunction]
#[pyo3(signature = (problem, method, degree, levels, threads = 0))]
fn mms_study(
    py: Python<'_>,
    problem: &str,
    method: &str,
    degree: usize,
    levels: (u32, u32),
    threads: usize,
) -> PyResult<PyConvergenceTable> {
    let (s, v) = (spec(problem)?, variant(method)?);
    let inner = py
        .detach(|| study::mms_study(&s, v, degree, levels.0..=levels.1, threads))
        .map_err(err)?;
    Ok(PyConvergenceTable { inner })
}

#[pymodule]
#[pyo3(name = "edg")]
fn edg_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyConvergenceTable>()?;
    m.add_function(wrap_pyfunction!(problems, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_study, m)?)?;
    m.add_function(wrap_pyfunction!(mms_study, m)?)?;
    Ok(())
}

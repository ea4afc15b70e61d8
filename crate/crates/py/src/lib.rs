//! Python module `smallcap`: specs, moments, sweeps and geometry checks.
//!
//! Structured reports come back as plain dicts; sweep configurations go in as dicts
//! with the same keys as the TOML sections.

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use smallcap_core::geometry::{self as geo, AffineMap3, DecouplingParams};
use smallcap_core::quadrature::{moment_quadrature, QuadratureGrid, DEFAULT_OVERSAMPLE};
use smallcap_core::sharpness::{self, CoeffFamily, MaincorConfig, SweepConfig};
use smallcap_core::{Complex64, ExpSumSpec, FreqInterval, LabError, Limits, MomentResult, Point3};

create_exception!(
    smallcap,
    BudgetError,
    PyRuntimeError,
    "A work budget was exceeded."
);

fn err(e: LabError) -> PyErr {
    match e {
        LabError::Invalid(m) => PyValueError::new_err(m),
        b @ LabError::Budget { .. } => BudgetError::new_err(b.to_string()),
        LabError::Io(e) => PyOSError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj
        .py()
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn family(name: &str) -> PyResult<CoeffFamily> {
    name.parse().map_err(err)
}

fn limits(budget_tuples: Option<u64>, budget_cells: Option<u64>) -> Limits {
    let d = Limits::default();
    Limits {
        tuples: budget_tuples.unwrap_or(d.tuples),
        cell_ops: budget_cells.unwrap_or(d.cell_ops),
        ..d
    }
}

fn point((x1, x2, x3): (f64, f64, f64)) -> Point3 {
    Point3::new(x1, x2, x3)
}

/// `S(x) = Σ_{k=1}^N a_k e(k x1 + k² x2 + k³ x3)` on `[0,1]² × [h0, h0 + N^-σ]`.
#[pyclass(name = "ExpSumSpec", module = "smallcap", frozen)]
struct PySpec {
    inner: ExpSumSpec,
}

#[pymethods]
impl PySpec {
    #[new]
    #[pyo3(signature = (coeffs, sigma = 0.0, h0 = 0.0))]
    fn new(coeffs: Vec<Complex64>, sigma: f64, h0: f64) -> PyResult<Self> {
        Ok(PySpec {
            inner: ExpSumSpec::new(coeffs, sigma, h0).map_err(err)?,
        })
    }

    /// Coefficients from a named family: constant, random_sign, random_phase.
    #[staticmethod]
    #[pyo3(signature = (name, n, sigma = 0.0, h0 = 0.0, seed = 0))]
    fn family(name: &str, n: usize, sigma: f64, h0: f64, seed: u64) -> PyResult<Self> {
        Self::new(family(name)?.coeffs(n, seed), sigma, h0)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn h0(&self) -> f64 {
        self.inner.h0()
    }

    #[getter]
    fn coeffs(&self) -> Vec<Complex64> {
        self.inner.coeffs().to_vec()
    }

    fn eval(&self, x: (f64, f64, f64)) -> Complex64 {
        smallcap_core::eval_sum(&self.inner, point(x))
    }

    /// Partial sum over `k/N` in `[lo, hi)` (closed at 1).
    fn eval_band(&self, lo: f64, hi: f64, x: (f64, f64, f64)) -> PyResult<Complex64> {
        let band = FreqInterval::new(lo, hi).map_err(err)?;
        Ok(smallcap_core::eval_partial_sum(&self.inner, band, point(x)))
    }

    fn __repr__(&self) -> String {
        format!(
            "ExpSumSpec(N={}, sigma={}, h0={})",
            self.inner.n(),
            self.inner.sigma(),
            self.inner.h0()
        )
    }
}

#[pyclass(name = "MomentResult", module = "smallcap", frozen, get_all)]
struct PyMoment {
    value: f64,
    method: String,
    err_estimate: f64,
    wall_time: f64,
}

impl From<MomentResult> for PyMoment {
    fn from(m: MomentResult) -> Self {
        PyMoment {
            value: m.value,
            method: m.method.to_string(),
            err_estimate: m.err_estimate,
            wall_time: m.wall_time,
        }
    }
}

#[pymethods]
impl PyMoment {
    fn __repr__(&self) -> String {
        format!(
            "MomentResult(value={}, method='{}', err_estimate={})",
            self.value, self.method, self.err_estimate
        )
    }
}

/// Affine map `x ↦ M x + offset` on R³.
#[pyclass(name = "AffineMap", module = "smallcap", frozen)]
struct PyAffine {
    inner: AffineMap3,
}

#[pymethods]
impl PyAffine {
    fn apply(&self, x: (f64, f64, f64)) -> (f64, f64, f64) {
        let p = self.inner.apply(point(x));
        (p.x1, p.x2, p.x3)
    }

    fn det(&self) -> f64 {
        self.inner.det()
    }

    fn inverse(&self) -> PyResult<PyAffine> {
        Ok(PyAffine {
            inner: self.inner.inverse().map_err(err)?,
        })
    }

    #[getter]
    fn matrix(&self) -> [[f64; 3]; 3] {
        self.inner.matrix
    }

    #[getter]
    fn offset(&self) -> [f64; 3] {
        self.inner.offset
    }
}

#[pyfunction]
#[pyo3(signature = (spec, s, budget_tuples = None))]
fn moment_exact(
    py: Python<'_>,
    spec: &PySpec,
    s: usize,
    budget_tuples: Option<u64>,
) -> PyResult<PyMoment> {
    let lim = limits(budget_tuples, None);
    py.detach(|| smallcap_core::moment_exact(&spec.inner, s, &lim))
        .map(Into::into)
        .map_err(err)
}

#[pyfunction]
fn moment_brute(py: Python<'_>, spec: &PySpec, s: usize) -> PyResult<PyMoment> {
    py.detach(|| smallcap_core::moment_brute(&spec.inner, s, &Limits::default()))
        .map(Into::into)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (spec, p, oversample = DEFAULT_OVERSAMPLE, budget_cells = None))]
fn moment_quad(
    py: Python<'_>,
    spec: &PySpec,
    p: f64,
    oversample: f64,
    budget_cells: Option<u64>,
) -> PyResult<PyMoment> {
    let lim = limits(None, budget_cells);
    py.detach(|| {
        let grid = QuadratureGrid::for_spec(&spec.inner, p, oversample)?;
        moment_quadrature(&spec.inner, p, &grid, &lim)
    })
    .map(Into::into)
    .map_err(err)
}

#[pyfunction]
fn vinogradov_count(py: Python<'_>, n: usize, s: usize) -> PyResult<u128> {
    py.detach(|| smallcap_core::vinogradov_count(n, s, &Limits::default()))
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (name, n, seed = 0))]
fn coeffs(name: &str, n: usize, seed: u64) -> PyResult<Vec<Complex64>> {
    Ok(family(name)?.coeffs(n, seed))
}

#[pyfunction]
fn exponent_fit<'py>(py: Python<'py>, points: Vec<(f64, f64)>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &sharpness::exponent_fit(&points).map_err(err)?)
}

#[pyfunction]
fn interference_lower_bound<'py>(
    py: Python<'py>,
    spec: &PySpec,
    s: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let b = py
        .detach(|| sharpness::interference_lower_bound(&spec.inner, s, &Limits::default()))
        .map_err(err)?;
    to_py(py, &b)
}

#[pyfunction]
#[pyo3(signature = (spec, bands, e, samples, seed = 0))]
fn broad_narrow_check<'py>(
    py: Python<'py>,
    spec: &PySpec,
    bands: usize,
    e: f64,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = py
        .detach(|| {
            sharpness::broad_narrow_check(
                &spec.inner,
                bands,
                e,
                &sharpness::sample_points(samples, seed),
            )
        })
        .map_err(err)?;
    to_py(py, &rep)
}

/// Sweep over N; `config` has the keys of a `[mainexp]` section.
#[pyfunction]
fn verify_mainexp_bound<'py>(config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: SweepConfig = from_py(config)?;
    let py = config.py();
    let rep = py
        .detach(|| smallcap_core::verify_mainexp_bound(&cfg, &Limits::default()))
        .map_err(err)?;
    to_py(py, &rep)
}

/// Local sweep over R; `config` has the keys of a `[maincor]` section.
#[pyfunction]
fn verify_maincor<'py>(config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: MaincorConfig = from_py(config)?;
    let py = config.py();
    let rep = py
        .detach(|| smallcap_core::verify_maincor(&cfg, &Limits::default()))
        .map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
fn cone_map() -> PyAffine {
    PyAffine {
        inner: geo::cone_map(),
    }
}

#[pyfunction]
fn rescale_map(r_prev: f64, l: usize) -> PyResult<PyAffine> {
    Ok(PyAffine {
        inner: geo::rescale_map(r_prev, l).map_err(err)?,
    })
}

/// Index of the small cap holding `xi`, or None outside the neighbourhood.
#[pyfunction]
#[pyo3(name = "cap_index_of")]
fn cap_index(r: f64, beta: f64, xi: (f64, f64, f64)) -> PyResult<Option<usize>> {
    Ok(geo::cap_index_of(
        &DecouplingParams::new(r, beta).map_err(err)?,
        point(xi),
    ))
}

/// Runs one named geometry check: geo1, geo2, geo3, partition or rescale.
#[pyfunction]
#[pyo3(signature = (check, r = 1048576.0, beta = 0.5, c_eps = 1.0, samples = 10_000, seed = 1, r_prev = 4096.0, l = 0))]
#[allow(clippy::too_many_arguments)]
fn geometry_check<'py>(
    py: Python<'py>,
    check: &str,
    r: f64,
    beta: f64,
    c_eps: f64,
    samples: usize,
    seed: u64,
    r_prev: f64,
    l: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let params = DecouplingParams::new(r, beta).map_err(err)?;
    let rep = py
        .detach(|| match check {
            "geo1" => geo::geo1_suite(&params, c_eps, samples, seed),
            "geo2" => geo::geo2_suite(&params, c_eps, samples, seed).map(|(_, rep)| rep),
            "geo3" => geo::geo3_suite(r, c_eps, &[], samples, seed),
            "partition" => geo::check_partition(&params, samples, seed),
            "rescale" => geo::check_rescale(r_prev, l, &params, samples, seed),
            other => Err(LabError::invalid(format!("unknown check '{other}'"))),
        })
        .map_err(err)?;
    to_py(py, &rep)
}

#[pymodule]
fn smallcap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("BudgetError", m.py().get_type::<BudgetError>())?;
    m.add_class::<PySpec>()?;
    m.add_class::<PyMoment>()?;
    m.add_class::<PyAffine>()?;
    m.add_function(wrap_pyfunction!(moment_exact, m)?)?;
    m.add_function(wrap_pyfunction!(moment_brute, m)?)?;
    m.add_function(wrap_pyfunction!(moment_quad, m)?)?;
    m.add_function(wrap_pyfunction!(vinogradov_count, m)?)?;
    m.add_function(wrap_pyfunction!(coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(exponent_fit, m)?)?;
    m.add_function(wrap_pyfunction!(interference_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(broad_narrow_check, m)?)?;
    m.add_function(wrap_pyfunction!(verify_mainexp_bound, m)?)?;
    m.add_function(wrap_pyfunction!(verify_maincor, m)?)?;
    m.add_function(wrap_pyfunction!(cone_map, m)?)?;
    m.add_function(wrap_pyfunction!(rescale_map, m)?)?;
    m.add_function(wrap_pyfunction!(cap_index, m)?)?;
    m.add_function(wrap_pyfunction!(geometry_check, m)?)?;
    Ok(())
}

//! Python bindings. Reports come back as plain dicts and lists.

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use sil_core::arith::{self, factor_window, table_for, window_eval};
use sil_core::dirpoly::{self, max_step, DirPoly as CoreDirPoly};
use sil_core::intervals::{system_density_report, SystemSpec};
use sil_core::lab::{self, load_config, run_plan, GapSet, Params};
use sil_core::normform::{self, define_field, parse_poly};
use sil_core::pretence::{self, Variant};
use sil_core::sieve;
use sil_core::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A multiplicative function, built from a spec such as `"moebius"` or `"nit(5)"`.
#[pyclass(frozen, module = "sil")]
struct MultFn {
    inner: arith::MultFn,
}

#[pymethods]
impl MultFn {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(MultFn { inner: arith::MultFn::parse(spec).map_err(err)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    /// `f(p^k)`.
    fn value(&self, p: u64, k: u32) -> Complex64 {
        self.inner.value(p, k)
    }

    /// Values on `[start, start + len)`, `start ≥ 2`.
    fn values(&self, start: u64, len: u64) -> PyResult<Vec<Complex64>> {
        let fw = factor_window(start, len, &table_for(start + len)).map_err(err)?;
        Ok(window_eval(&self.inner, &fw))
    }

    fn twisted(&self, tau: f64) -> MultFn {
        MultFn { inner: self.inner.twisted(tau) }
    }

    fn __repr__(&self) -> String {
        format!("MultFn('{}')", self.inner.name())
    }
}

#[pyfunction]
fn primes(limit: u64) -> PyResult<Vec<u64>> {
    Ok(arith::sieve_primes(limit).map_err(err)?.primes().to_vec())
}

/// `[(n, [(p, e), ...]), ...]` for `n` in `[start, start + len)`.
#[pyfunction]
fn factor(start: u64, len: u64) -> PyResult<Vec<(u64, Vec<(u64, u8)>)>> {
    let fw = factor_window(start, len, &table_for(start + len)).map_err(err)?;
    Ok(fw.iter().map(|(n, fs)| (n, fs.iter().map(|pp| (pp.p, pp.e)).collect())).collect())
}

#[pyfunction]
#[pyo3(signature = (f, x, variant = "dense"))]
fn pretend<'py>(py: Python<'py>, f: &MultFn, x: u64, variant: &str) -> PyResult<Bound<'py, PyAny>> {
    let variant: Variant = variant.parse().map_err(err)?;
    to_py(py, &pretence::minimize_pretend(&f.inner, x, variant).map_err(err)?)
}

#[pyfunction]
fn euler_products<'py>(py: Python<'py>, f: &MultFn, x: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &pretence::euler_products(&f.inner, x).map_err(err)?)
}

/// `Σ_{lo ≤ n < lo + len} a_n n^{-s}`.
#[pyclass(frozen, module = "sil")]
struct DirPoly {
    inner: CoreDirPoly,
}

#[pymethods]
impl DirPoly {
    #[new]
    fn new(lo: u64, coeffs: Vec<Complex64>) -> PyResult<Self> {
        Ok(DirPoly { inner: CoreDirPoly::new(lo, coeffs).map_err(err)? })
    }

    /// Coefficients `f(n)` for `X < n ≤ 2X`.
    #[staticmethod]
    fn dyadic(f: &MultFn, x: u64) -> PyResult<Self> {
        let fw = factor_window(x + 1, x, &table_for(2 * x + 1)).map_err(err)?;
        Ok(DirPoly { inner: CoreDirPoly::new(x + 1, window_eval(&f.inner, &fw)).map_err(err)? })
    }

    #[getter]
    fn lo(&self) -> u64 {
        self.inner.lo()
    }

    #[getter]
    fn hi(&self) -> u64 {
        self.inner.hi()
    }

    fn __call__(&self, sigma: f64, t: f64) -> Complex64 {
        self.inner.evaluate(sigma, t)
    }

    /// `∫_{-T}^{T} |P(σ + it)|² dt`.
    fn mean_square(&self, sigma: f64, t: f64) -> PyResult<f64> {
        dirpoly::mean_square_grid(&self.inner, sigma, t, max_step(self.inner.hi())).map_err(err)
    }

    fn weighted_l2(&self, sigma: f64) -> f64 {
        self.inner.weighted_l2(sigma)
    }

    fn perron(&self, x: f64, h: f64, t: f64) -> PyResult<Complex64> {
        dirpoly::perron_short_average(&self.inner, x, h, t).map_err(err)
    }
}

/// Majorant check of the sieve weights for `g` at scale `X`.
#[pyfunction]
#[pyo3(signature = (g, x, limit = None, tau = 3.0))]
fn sieve_check<'py>(py: Python<'py>, g: &MultFn, x: u64, limit: Option<u64>, tau: f64) -> PyResult<Bound<'py, PyDict>> {
    let w = sieve::lambda_weights(&sieve::brun_hooley_plan(x, tau).map_err(err)?, &g.inner).map_err(err)?;
    let violations = sieve::majorant_violations(&w, &g.inner, limit.unwrap_or(x)).map_err(err)?;
    let sums = sieve::weight_sum_report(&w, &g.inner, x).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("violations", violations)?;
    out.set_item("weights", w.to_f64())?;
    out.set_item("sums", to_py(py, &sums)?)?;
    Ok(out)
}

/// Interval system at `X` from keyword parameters, or explicit `pairs`.
#[pyfunction]
#[pyo3(signature = (x, pairs = None))]
fn interval_system<'py>(py: Python<'py>, x: u64, pairs: Option<Vec<(f64, f64)>>) -> PyResult<Bound<'py, PyAny>> {
    let spec = SystemSpec { pairs, ..SystemSpec::default() };
    let sys = spec.build(x).map_err(err)?;
    let out = to_py(py, &sys)?;
    out.set_item("density", to_py(py, &system_density_report(&sys, x).map_err(err)?)?)?;
    Ok(out)
}

/// A number field from its minimal polynomial, e.g. `"x^2+5"`.
#[pyclass(frozen, module = "sil")]
struct NumberField {
    inner: normform::NumberField,
}

#[pymethods]
impl NumberField {
    #[new]
    fn new(poly: &str) -> PyResult<Self> {
        Ok(NumberField { inner: define_field(&parse_poly(poly).map_err(err)?).map_err(err)? })
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree
    }

    /// `(Δ_K(n), g_K(n))` for `n` in `[start, start + len)`, `start ≥ 2`.
    fn indicators(&self, start: u64, len: u64) -> PyResult<Vec<(u64, bool, bool)>> {
        let fw = factor_window(start, len, &table_for(start + len)).map_err(err)?;
        (start..start + len)
            .map(|n| {
                let d = normform::ideal_norm_indicator(&self.inner, n, &fw).map_err(err)?;
                let g = normform::normform_indicator(&self.inner, n, &fw).map_err(err)?;
                Ok((n, d, g))
            })
            .collect()
    }

    fn density(&self, x: u64) -> PyResult<f64> {
        normform::delta_k_x(&self.inner, x).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("NumberField('{}')", self.inner)
    }
}

#[pyfunction]
#[pyo3(signature = (f, x, h, stride = None, deltas = vec![0.05, 0.1, 0.2]))]
fn scan<'py>(py: Python<'py>, f: &MultFn, x: u64, h: u64, stride: Option<u64>, deltas: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let stride = stride.unwrap_or_else(|| lab::default_stride(x));
    let r = lab::run_scan(&f.inner, x, h, stride, &deltas).map_err(err)?;
    to_py(py, &r.to_json())
}

/// Gap moments of a set: a function spec or `"smooth(θ)"`.
#[pyfunction]
fn gaps<'py>(py: Python<'py>, set: &str, x: u64, gammas: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let set = GapSet::parse(set).map_err(err)?;
    to_py(py, &lab::run_gaps(&set, x, &gammas).map_err(err)?.to_json())
}

/// Measured ratio for a bound id; `params` maps names to numbers, lists or strings.
#[pyfunction]
#[pyo3(signature = (id, params = None, seed = 0))]
fn bound<'py>(py: Python<'py>, id: &str, params: Option<Bound<'py, PyAny>>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let params: Params = match params {
        None => Params::new(),
        Some(p) => {
            let text: String = py.import("json")?.call_method1("dumps", (p,))?.extract()?;
            serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
    };
    to_py(py, &lab::measure_bound(id, &params, seed).map_err(err)?.to_json())
}

/// Run a TOML experiment config and return its report.
#[pyfunction]
fn run_config<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let plan = load_config(text).map_err(err)?;
    to_py(py, &run_plan(&plan).map_err(err)?.to_json())
}

#[pymodule]
fn sil(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<MultFn>()?;
    m.add_class::<DirPoly>()?;
    m.add_class::<NumberField>()?;
    m.add_function(wrap_pyfunction!(primes, m)?)?;
    m.add_function(wrap_pyfunction!(factor, m)?)?;
    m.add_function(wrap_pyfunction!(pretend, m)?)?;
    m.add_function(wrap_pyfunction!(euler_products, m)?)?;
    m.add_function(wrap_pyfunction!(sieve_check, m)?)?;
    m.add_function(wrap_pyfunction!(interval_system, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(gaps, m)?)?;
    m.add_function(wrap_pyfunction!(bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("BOUND_IDS", lab::BOUND_IDS.to_vec())?;
    Ok(())
}

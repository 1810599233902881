//! Python bindings for `splitfeas`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use splitfeas::fixops::{relax, ConvexSetSpec, OperatorRef, Projection, Relaxation};
use splitfeas::harness::{self, GeneratedInstance};
use splitfeas::landweber::{self, SigmaMode};
use splitfeas::regularity;
use splitfeas::solver::{self, IterationTrace, LambdaSchedule, SolverConfig, Variant};

fn err(e: splitfeas::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vec_in(x: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(x)
}

fn vec_out(x: &DVector<f64>) -> Vec<f64> {
    x.as_slice().to_vec()
}

fn sigma_mode(s: &str) -> PyResult<SigmaMode> {
    match s {
        "one" => Ok(SigmaMode::One),
        "tau" => Ok(SigmaMode::Tau),
        other => Err(PyValueError::new_err(format!(
            "unknown sigma mode `{other}`"
        ))),
    }
}

/// A real matrix with its spectral constants.
#[pyclass(name = "LinearMap", module = "splitfeas", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLinearMap {
    inner: splitfeas::LinearMap,
}

#[pymethods]
impl PyLinearMap {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = splitfeas::LinearMap::from_rows(&rows).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn op_norm(&self) -> f64 {
        self.inner.op_norm()
    }

    /// Smallest positive singular value.
    #[getter]
    fn min_pos_sv(&self) -> f64 {
        self.inner.min_pos_sv()
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner
            .apply(&vec_in(x))
            .map(|y| vec_out(&y))
            .map_err(err)
    }

    fn apply_adjoint(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner
            .apply_adjoint(&vec_in(y))
            .map(|x| vec_out(&x))
            .map_err(err)
    }

    fn scaled(&self, c: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.scaled(c).map_err(err)?,
        })
    }

    /// The four closed-range constants and their largest relative spread.
    fn spectra<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.closed_range_identity_check().map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("abs_A", r.abs_a)?;
        d.set_item("abs_A_adjoint", r.abs_adjoint)?;
        d.set_item("sqrt_abs_AAt", r.sqrt_abs_aat)?;
        d.set_item("sqrt_abs_AtA", r.sqrt_abs_ata)?;
        d.set_item("max_rel_deviation", r.max_rel_deviation)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "LinearMap({}x{}, rank {})",
            self.inner.rows(),
            self.inner.cols(),
            self.inner.rank()
        )
    }
}

#[pyclass(name = "ConvexSet", module = "splitfeas", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyConvexSet {
    inner: ConvexSetSpec,
}

#[pymethods]
impl PyConvexSet {
    #[staticmethod]
    fn halfspace(normal: Vec<f64>, offset: f64) -> PyResult<Self> {
        let inner = ConvexSetSpec::halfspace(vec_in(normal), offset).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn ball(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        let inner = ConvexSetSpec::ball(vec_in(center), radius).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(name = "box")]
    fn bounding_box(lo: Vec<f64>, hi: Vec<f64>) -> PyResult<Self> {
        let inner = ConvexSetSpec::bounding_box(vec_in(lo), vec_in(hi)).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner
            .project(&vec_in(x))
            .map(|p| vec_out(&p))
            .map_err(err)
    }

    fn distance(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.distance(&vec_in(x)).map_err(err)
    }

    #[pyo3(signature = (x, tol = 1e-12))]
    fn contains(&self, x: Vec<f64>, tol: f64) -> PyResult<bool> {
        self.inner.contains(&vec_in(x), tol).map_err(err)
    }
}

/// A fixed-point operator: a projection or a relaxation of one.
#[pyclass(name = "Operator", module = "splitfeas", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyOperator {
    inner: OperatorRef,
}

#[pymethods]
impl PyOperator {
    #[staticmethod]
    fn projection(set: &PyConvexSet) -> Self {
        Self {
            inner: Arc::new(Projection::new(set.inner.clone())),
        }
    }

    /// `Id + λ(T − Id)`.
    fn relaxed(&self, lam: f64) -> PyResult<Self> {
        let inner = relax(self.inner.clone(), Relaxation::Constant(lam)).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.sqne_rho()
    }

    #[getter]
    fn is_cutter(&self) -> bool {
        self.inner.is_cutter()
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner
            .apply(&vec_in(x))
            .map(|y| vec_out(&y))
            .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Operator({})", self.inner.describe())
    }
}

/// `x + A*(T(Ax) − Ax)/‖A‖²`.
#[pyfunction]
fn landweber_apply(a: &PyLinearMap, t: &PyOperator, x: Vec<f64>) -> PyResult<Vec<f64>> {
    landweber::landweber_apply(&a.inner, t.inner.as_ref(), &vec_in(x))
        .map(|y| vec_out(&y))
        .map_err(err)
}

/// The extrapolated step `x + λσ(x)A*(T(Ax) − Ax)/‖A‖²`. Returns the point
/// and the step size `σ(x)` used.
#[pyfunction]
#[pyo3(signature = (a, t, x, sigma = "tau", lam = 1.0))]
fn extrapolated_step(
    a: &PyLinearMap,
    t: &PyOperator,
    x: Vec<f64>,
    sigma: &str,
    lam: f64,
) -> PyResult<(Vec<f64>, f64)> {
    let s = landweber::extrapolated_step(
        &a.inner,
        t.inner.as_ref(),
        &sigma_mode(sigma)?,
        lam,
        &vec_in(x),
    )
    .map_err(err)?;
    Ok((vec_out(&s.point), s.sigma))
}

#[pyfunction]
fn tau(a: &PyLinearMap, t: &PyOperator, x: Vec<f64>) -> PyResult<f64> {
    landweber::tau(&a.inner, t.inner.as_ref(), &vec_in(x)).map_err(err)
}

#[pyfunction]
fn landweber_modulus(rho: f64, delta: f64, kappa: f64, a: &PyLinearMap) -> PyResult<f64> {
    regularity::landweber_modulus(rho, delta, kappa, &a.inner).map_err(err)
}

/// Returns `(Gamma, q)`.
#[pyfunction]
fn rate_bound(
    rho_s: f64,
    rho_t: f64,
    delta_s: f64,
    big_delta: f64,
    epsilon: f64,
    kappa1: f64,
) -> PyResult<(f64, f64)> {
    let rb =
        regularity::rate_bound(rho_s, rho_t, delta_s, big_delta, epsilon, kappa1).map_err(err)?;
    Ok((rb.gamma, rb.q))
}

#[pyclass(name = "Trace", module = "splitfeas", frozen)]
struct PyTrace {
    inner: IterationTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn final_x(&self) -> Vec<f64> {
        vec_out(&self.inner.final_x)
    }

    #[getter]
    fn final_dist(&self) -> Option<f64> {
        self.inner.final_dist
    }

    #[getter]
    fn step_norms(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.step_norm).collect()
    }

    /// `d(x_k, F)` where it was computed.
    #[getter]
    fn distances(&self) -> Vec<Option<f64>> {
        self.inner.records.iter().map(|r| r.dist_f).collect()
    }

    fn x(&self, k: usize) -> PyResult<Vec<f64>> {
        if k > self.inner.iterations() {
            return Err(PyValueError::new_err(format!(
                "k = {k} past the last iterate"
            )));
        }
        Ok(vec_out(self.inner.x(k)))
    }

    #[pyo3(signature = (burn_in = 0))]
    fn observed_rate(&self, burn_in: usize) -> PyResult<f64> {
        solver::observed_rate(&self.inner, burn_in)
            .map(|r| r.max_ratio)
            .map_err(err)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// A generated benchmark instance with its ground truth.
#[pyclass(name = "Instance", module = "splitfeas", frozen)]
struct PyInstance {
    inner: GeneratedInstance,
}

/// A constant relaxation or a pair alternating between even and odd steps.
#[derive(FromPyObject, Clone, Copy)]
enum Lam {
    Pair(f64, f64),
    Constant(f64),
}

fn solver_config(
    variant: &str,
    sigma: &str,
    lam: Lam,
    epsilon: f64,
    max_iter: usize,
    stop_tol: f64,
    seed: u64,
) -> PyResult<SolverConfig> {
    let lambda = match lam {
        Lam::Constant(v) => LambdaSchedule::Constant(v),
        Lam::Pair(a, b) => LambdaSchedule::Alternating(a, b),
    };
    let cfg = SolverConfig {
        variant: Variant::parse(variant).map_err(err)?,
        sigma: sigma_mode(sigma)?,
        epsilon,
        lambda,
        max_iter,
        stop_tol,
        seed,
        ..SolverConfig::default()
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

#[pymethods]
impl PyInstance {
    #[getter]
    fn label(&self) -> String {
        self.inner.instance.label.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.instance.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.instance.m()
    }

    #[getter]
    fn map(&self) -> PyLinearMap {
        PyLinearMap {
            inner: self.inner.instance.map.clone(),
        }
    }

    #[getter]
    fn s(&self) -> PyOperator {
        PyOperator {
            inner: self.inner.instance.s.clone(),
        }
    }

    #[getter]
    fn t(&self) -> PyOperator {
        PyOperator {
            inner: self.inner.instance.t.clone(),
        }
    }

    #[getter]
    fn x0(&self) -> Vec<f64> {
        vec_out(&self.inner.x0)
    }

    #[getter]
    fn witness(&self) -> Vec<f64> {
        vec_out(&self.inner.instance.witness)
    }

    /// Distance to `Fix S ∩ A⁻¹(Fix T)`.
    fn solution_distance(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner
            .instance
            .solution_distance(&vec_in(x))
            .map(|d| d.0)
            .map_err(err)
    }

    #[pyo3(signature = (
        variant = "landweber_sqne",
        sigma = "one",
        lam = Lam::Constant(1.0),
        epsilon = 0.05,
        max_iter = 10_000,
        stop_tol = 1e-10,
        seed = 0,
        x0 = None,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        py: Python<'_>,
        variant: &str,
        sigma: &str,
        lam: Lam,
        epsilon: f64,
        max_iter: usize,
        stop_tol: f64,
        seed: u64,
        x0: Option<Vec<f64>>,
    ) -> PyResult<PyTrace> {
        let cfg = solver_config(variant, sigma, lam, epsilon, max_iter, stop_tol, seed)?;
        let x0 = x0.map(vec_in).unwrap_or_else(|| self.inner.x0.clone());
        let inst = &self.inner.instance;
        let trace = py.detach(|| solver::run(inst, &cfg, &x0)).map_err(err)?;
        Ok(PyTrace { inner: trace })
    }

    /// Regularity report as a dict of `name -> (value, provenance)`.
    #[pyo3(signature = (variant = "landweber_sqne", sigma = "one", lam = Lam::Constant(1.0), epsilon = 0.05))]
    fn certify<'py>(
        &self,
        py: Python<'py>,
        variant: &str,
        sigma: &str,
        lam: Lam,
        epsilon: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = solver_config(variant, sigma, lam, epsilon, 1, 1e-10, 0)?;
        let g = &self.inner;
        let est = py.detach(|| harness::certify(g, &cfg)).map_err(err)?;
        let d = PyDict::new(py);
        for (key, e) in [
            ("delta_S", &est.delta_s),
            ("delta_T", &est.delta_t),
            ("kappa1", &est.kappa1),
            ("kappa2", &est.kappa2),
            ("Delta", &est.delta_landweber),
            ("Gamma", &est.gamma),
            ("q", &est.q_rate),
            ("gamma_r", &est.gamma_r),
        ] {
            d.set_item(key, (e.value, e.provenance.as_str()))?;
        }
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Instance({})", self.inner.instance.label)
    }
}

#[pyfunction]
fn generate_instance(recipe: &str, n: usize, m: usize, seed: u64) -> PyResult<PyInstance> {
    let inner = harness::generate_instance(recipe, n, m, seed).map_err(err)?;
    Ok(PyInstance { inner })
}

#[pyfunction]
fn identity(n: usize) -> PyResult<PyLinearMap> {
    let inner = splitfeas::LinearMap::new(DMatrix::identity(n, n)).map_err(err)?;
    Ok(PyLinearMap { inner })
}

#[pymodule]
#[pyo3(name = "splitfeas")]
fn splitfeas_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLinearMap>()?;
    m.add_class::<PyConvexSet>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(landweber_apply, m)?)?;
    m.add_function(wrap_pyfunction!(extrapolated_step, m)?)?;
    m.add_function(wrap_pyfunction!(tau, m)?)?;
    m.add_function(wrap_pyfunction!(landweber_modulus, m)?)?;
    m.add_function(wrap_pyfunction!(rate_bound, m)?)?;
    m.add_function(wrap_pyfunction!(generate_instance, m)?)?;
    m.add_function(wrap_pyfunction!(identity, m)?)?;
    Ok(())
}

//! Python bindings for `qpkam`.
//!
//! The wrapped types are immutable from Python; every solver call returns
//! new objects.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qpkam::certificate::{certify, MeasureOptions};
use qpkam::cohomology::{check_diophantine, russmann_bound, CohomologyError};
use qpkam::fourier::TorusDims;
use qpkam::newton::{default_shape, run_iteration, History, NewtonConfig, NewtonError};
use qpkam::system::{flow_validate, invariance_error};

create_exception!(pyqpkam, DivergenceError, PyRuntimeError);
create_exception!(pyqpkam, ResonanceError, PyValueError);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn cohomology_err(e: CohomologyError) -> PyErr {
    match e {
        CohomologyError::Resonance { .. } => ResonanceError::new_err(e.to_string()),
        other => value_err(other),
    }
}

#[pyclass(frozen, module = "pyqpkam")]
struct Frequencies(qpkam::cohomology::Frequencies);

#[pymethods]
impl Frequencies {
    #[new]
    #[pyo3(signature = (omega, alpha, gamma, tau))]
    fn new(omega: Vec<f64>, alpha: Vec<f64>, gamma: f64, tau: f64) -> PyResult<Self> {
        qpkam::cohomology::Frequencies::new(omega, alpha, gamma, tau)
            .map(Self)
            .map_err(cohomology_err)
    }

    #[getter]
    fn omega(&self) -> Vec<f64> {
        self.0.omega().to_vec()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.0.alpha().to_vec()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau()
    }

    /// `(effective_gamma, worst_k)` over `0 < |k|_1 <= box_radius`.
    /// Raises `ResonanceError` on an exact resonance.
    #[pyo3(signature = (box_radius = 50))]
    fn check_diophantine(&self, box_radius: usize) -> PyResult<(f64, Vec<i64>)> {
        let r = check_diophantine(&self.0, box_radius).map_err(cohomology_err)?;
        Ok((r.effective_gamma, r.worst_index))
    }

    fn russmann_bound(&self, delta: f64, trunc: Vec<usize>) -> PyResult<f64> {
        russmann_bound(&self.0, delta, &trunc).map_err(cohomology_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Frequencies(omega={:?}, alpha={:?}, gamma={}, tau={})",
            self.0.omega(),
            self.0.alpha(),
            self.0.gamma(),
            self.0.tau()
        )
    }
}

#[pyclass(frozen, module = "pyqpkam")]
struct TorusEmbedding(qpkam::geometry::TorusEmbedding);

#[pymethods]
impl TorusEmbedding {
    /// `K(theta, phi) = (theta, y0)`.
    #[staticmethod]
    #[pyo3(signature = (y0, ell, trunc))]
    fn rotator(y0: Vec<f64>, ell: usize, trunc: Vec<usize>) -> PyResult<Self> {
        let dims = TorusDims::new(y0.len(), ell).map_err(value_err)?;
        if trunc.len() != dims.d() {
            return Err(value_err(format!("trunc needs {} entries", dims.d())));
        }
        qpkam::geometry::TorusEmbedding::rotator(dims, &trunc, &y0)
            .map(Self)
            .map_err(value_err)
    }

    /// Reads `winding.txt` and `K_<i>.coef` from a directory.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        qpkam::cli::read_torus(&dir).map(Self).map_err(value_err)
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        qpkam::cli::write_torus(&dir, &self.0).map_err(runtime_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn trunc(&self) -> Vec<usize> {
        self.0.trunc().to_vec()
    }

    /// Averages of the components.
    fn averages(&self) -> Vec<f64> {
        self.0.components().iter().map(|c| c.average()).collect()
    }

    /// `K(theta, phi)` at one point of `T^(n + ell)`.
    fn evaluate(&self, point: Vec<f64>) -> PyResult<Vec<f64>> {
        if point.len() != self.0.dims().d() {
            return Err(value_err(format!("point needs {} entries", self.0.dims().d())));
        }
        self.0
            .evaluate(&point)
            .map(|v| v.as_slice().to_vec())
            .map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("TorusEmbedding(n={}, trunc={:?})", self.0.n(), self.0.trunc())
    }
}

/// Quasi-periodically forced rotors; `pendulum` gives the n = 1 case.
#[pyclass(frozen, module = "pyqpkam")]
struct ForcedRotors(qpkam::system::ForcedRotors);

#[pymethods]
impl ForcedRotors {
    #[staticmethod]
    #[pyo3(signature = (epsilon, ell = 1, y_center = 0.6180339887498949))]
    fn pendulum(epsilon: f64, ell: usize, y_center: f64) -> PyResult<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) || ell == 0 {
            return Err(value_err("need epsilon >= 0 and ell >= 1"));
        }
        Ok(Self(qpkam::system::ForcedRotors::pendulum(epsilon, ell, y_center)))
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon()
    }

    fn with_epsilon(&self, epsilon: f64) -> PyResult<Self> {
        self.0.with_epsilon(epsilon).map(Self).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("ForcedRotors(epsilon={})", self.0.epsilon())
    }
}

fn shape_or_default(k: &TorusEmbedding, shape: Option<Vec<usize>>) -> Vec<usize> {
    shape.unwrap_or_else(|| default_shape(k.0.trunc()))
}

/// Nodal sup norm of the invariance error.
#[pyfunction]
#[pyo3(signature = (torus, system, freqs, shape = None))]
fn invariance_error_sup(
    torus: &TorusEmbedding,
    system: &ForcedRotors,
    freqs: &Frequencies,
    shape: Option<Vec<usize>>,
) -> PyResult<f64> {
    let shape = shape_or_default(torus, shape);
    invariance_error(&torus.0, &system.0, &freqs.0, &shape)
        .map(|e| e.sup)
        .map_err(value_err)
}

fn history_dict<'py>(py: Python<'py>, h: &History) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("converged", h.converged)?;
    d.set_item("errors", h.errors.clone())?;
    d.set_item("iterations", h.steps.len())?;
    d.set_item("fitted_order", h.fitted_order(3))?;
    Ok(d)
}

/// Runs the quasi-Newton iteration. Returns `(torus, history)`; raises
/// `DivergenceError` when the iteration diverges.
#[pyfunction]
#[pyo3(signature = (torus, system, freqs, max_iters = 20, stop_tol = 1e-11, shape = None))]
fn solve<'py>(
    py: Python<'py>,
    torus: &TorusEmbedding,
    system: &ForcedRotors,
    freqs: &Frequencies,
    max_iters: usize,
    stop_tol: f64,
    shape: Option<Vec<usize>>,
) -> PyResult<(TorusEmbedding, Bound<'py, PyDict>)> {
    let cfg = NewtonConfig {
        max_iters,
        stop_tol,
        shape,
        ..NewtonConfig::default()
    };
    let (k, s, f) = (&torus.0, &system.0, &freqs.0);
    match py.detach(|| run_iteration(k, s, f, &cfg)) {
        Ok(out) => Ok((TorusEmbedding(out.torus), history_dict(py, &out.history)?)),
        Err(NewtonError::Divergence { history }) => Err(DivergenceError::new_err(format!(
            "diverged after {} steps, errors {:?}",
            history.steps.len(),
            history.errors
        ))),
        Err(NewtonError::InvalidConfig(m)) => Err(value_err(m)),
        Err(e) => Err(runtime_err(e)),
    }
}

/// Largest deviation between integrated orbits and the rotated
/// parameterization.
#[pyfunction]
#[pyo3(signature = (torus, system, freqs, t_final = 20.0, samples = 16, checkpoints = 20, tol = 1e-12))]
fn flow_deviation(
    py: Python<'_>,
    torus: &TorusEmbedding,
    system: &ForcedRotors,
    freqs: &Frequencies,
    t_final: f64,
    samples: usize,
    checkpoints: usize,
    tol: f64,
) -> PyResult<f64> {
    let (k, s, f) = (&torus.0, &system.0, &freqs.0);
    py.detach(|| flow_validate(k, s, f, t_final, samples, checkpoints, tol))
        .map(|r| r.max_deviation)
        .map_err(runtime_err)
}

/// Runs the certificate pipeline. The dict carries `verdict`, `lhs`,
/// `closeness`, `e_norm_rho`, `warnings` and the full text report.
#[pyfunction]
#[pyo3(signature = (torus, system, freqs, rho = 0.1, shape = None))]
fn certify_torus<'py>(
    py: Python<'py>,
    torus: &TorusEmbedding,
    system: &ForcedRotors,
    freqs: &Frequencies,
    rho: f64,
    shape: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyDict>> {
    let shape = shape_or_default(torus, shape);
    let opts = MeasureOptions {
        rho,
        ..MeasureOptions::default()
    };
    let (k, s, f) = (&torus.0, &system.0, &freqs.0);
    let r = py
        .detach(|| certify(k, s, f, &shape, &opts))
        .map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("verdict", r.verdict)?;
    d.set_item("lhs", r.lhs)?;
    d.set_item("closeness", r.closeness)?;
    d.set_item("e_norm_rho", r.e_norm_rho)?;
    d.set_item("c1", r.ledger.c1())?;
    d.set_item("c2", r.ledger.c2())?;
    d.set_item("warnings", r.warnings.clone())?;
    d.set_item("text", r.to_text())?;
    Ok(d)
}

#[pymodule]
fn pyqpkam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Frequencies>()?;
    m.add_class::<TorusEmbedding>()?;
    m.add_class::<ForcedRotors>()?;
    m.add_function(wrap_pyfunction!(invariance_error_sup, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(flow_deviation, m)?)?;
    m.add_function(wrap_pyfunction!(certify_torus, m)?)?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    m.add("ResonanceError", m.py().get_type::<ResonanceError>())?;
    Ok(())
}

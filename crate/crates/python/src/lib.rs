//! Python bindings for the `stcnet` crate.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stcnet::blackbox;
use stcnet::compose::{self, NetworkCertificate};
use stcnet::config::PipelineConfig;
use stcnet::lipschitz::{self, LipschitzConfig};
use stcnet::model::{CoefficientVector, IntervalBox, StcTemplate};
use stcnet::pipeline;
use stcnet::sampling;

fn err(e: stcnet::Error) -> PyErr {
    match e {
        stcnet::Error::Io(_) | stcnet::Error::Csv(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Monomial template `B(x) = sum_k c_k x^{a_k}`.
#[pyclass(name = "Template", frozen)]
struct PyTemplate(StcTemplate);

#[pymethods]
impl PyTemplate {
    #[new]
    fn new(state_dim: usize, terms: Vec<Vec<u32>>) -> PyResult<Self> {
        StcTemplate::new(state_dim, terms).map(Self).map_err(err)
    }

    /// All monomials of total degree at most `max_degree`.
    #[staticmethod]
    fn full_degree(state_dim: usize, max_degree: u32) -> PyResult<Self> {
        StcTemplate::full_degree(state_dim, max_degree).map(Self).map_err(err)
    }

    #[getter]
    fn terms(&self) -> Vec<Vec<u32>> {
        self.0.terms().to_vec()
    }

    fn basis(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.basis(&x).map_err(err)
    }

    fn eval(&self, coeffs: Vec<f64>, x: Vec<f64>) -> PyResult<f64> {
        self.0.eval(&CoefficientVector(coeffs), &x).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.term_count()
    }
}

/// A stored network certificate.
#[pyclass(name = "Certificate", frozen)]
struct PyCertificate(NetworkCertificate);

#[pymethods]
impl PyCertificate {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        compose::load_certificate(&path).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        NetworkCertificate::from_json(text).map(Self).map_err(PyValueError::new_err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        compose::store_certificate(&self.0, &path).map_err(err)
    }

    #[getter]
    fn certified(&self) -> bool {
        self.0.is_certified()
    }

    #[getter]
    fn class_ids(&self) -> Vec<String> {
        self.0.classes.iter().map(|c| c.id.clone()).collect()
    }

    /// Evaluate the class certificate `B(x)`.
    fn eval(&self, class_id: &str, x: Vec<f64>) -> PyResult<f64> {
        let c = self
            .0
            .class(class_id)
            .ok_or_else(|| PyValueError::new_err(format!("no class `{class_id}`")))?;
        c.eval(&x).map_err(err)
    }

    /// Evaluate the network certificate: sum of class certificates over the
    /// subsystem states, with `assignment[i]` the class index of subsystem `i`.
    fn eval_network(&self, states: Vec<Vec<f64>>, assignment: Vec<usize>) -> PyResult<f64> {
        compose::eval_network_certificate(&self.0, &states, &assignment).map_err(err)
    }

    /// Per-class numbers as a list of dicts.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.0
            .classes
            .iter()
            .map(|c| {
                let d = PyDict::new(py);
                d.set_item("id", &c.id)?;
                d.set_item("coeffs", c.coeffs.as_slice())?;
                d.set_item("sigma", c.sigma)?;
                d.set_item("phi", c.phi)?;
                d.set_item("eta", c.eta)?;
                d.set_item("beta", c.beta)?;
                d.set_item("l1", c.l1)?;
                d.set_item("l2", c.l2)?;
                d.set_item("theta", c.theta)?;
                d.set_item("samples", c.sample_count)?;
                d.set_item("m1", c.margins.m1)?;
                d.set_item("m2", c.margins.m2)?;
                d.set_item("gap", c.margins.gap)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Certificate(classes={:?}, verdict={:?})", self.class_ids(), self.0.verdict)
    }
}

/// The two compositional margins and the level gap.
#[pyfunction]
#[pyo3(signature = (eta, beta, l1, l2, theta, sigma=0.0, phi=0.0))]
fn margins<'py>(
    py: Python<'py>,
    eta: f64,
    beta: f64,
    l1: f64,
    l2: f64,
    theta: f64,
    sigma: f64,
    phi: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let m = compose::class_margins(eta, beta, l1, l2, theta, sigma, phi);
    let d = PyDict::new(py);
    d.set_item("m1", m.m1)?;
    d.set_item("m2", m.m2)?;
    d.set_item("gap", m.gap)?;
    d.set_item("holds", m.holds())?;
    Ok(d)
}

#[pyfunction]
fn room_step(x: f64, d: f64) -> f64 {
    blackbox::room_step(x, d)
}

#[pyfunction]
fn platoon_step(x: [f64; 2], d: [f64; 2]) -> [f64; 2] {
    blackbox::platoon_step(x, d)
}

/// Grid dispersion: half the cell diagonal of a uniform grid.
#[pyfunction]
fn grid_dispersion(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>) -> PyResult<f64> {
    let b = IntervalBox::new(lower, upper).map_err(err)?;
    sampling::dispersion_of_grid(&b, &counts).map_err(err)
}

/// Run the synthesis pipeline on a TOML config string.
#[pyfunction]
fn synthesize(py: Python<'_>, config: &str) -> PyResult<PyCertificate> {
    let cfg = PipelineConfig::from_toml(config).map_err(err)?;
    let out = py.detach(|| pipeline::run_pipeline(&cfg)).map_err(err)?;
    Ok(PyCertificate(out.certificate))
}

/// Estimate the Lipschitz constant of a Python function over a box.
///
/// Returns `(estimate, batch_maxima)`.
#[pyfunction]
#[pyo3(signature = (f, lower, upper, gamma=1e-3, inner=200, outer=50, seed=0))]
#[allow(clippy::too_many_arguments)]
fn estimate_lipschitz(
    py: Python<'_>,
    f: Py<PyAny>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    gamma: f64,
    inner: usize,
    outer: usize,
    seed: u64,
) -> PyResult<(f64, Vec<f64>)> {
    let domain = IntervalBox::new(lower, upper).map_err(err)?;
    let cfg = LipschitzConfig {
        gamma,
        inner_count: inner,
        outer_count: outer,
        seed,
    };
    let failure = std::sync::Mutex::new(None::<PyErr>);
    let eval = |x: &[f64]| -> f64 {
        Python::attach(|py| match f.call1(py, (x.to_vec(),)).and_then(|v| v.extract::<f64>(py)) {
            Ok(v) => v,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                f64::NAN
            }
        })
    };
    let est = py.detach(|| lipschitz::estimate_lipschitz(&eval, &domain, &cfg));
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let est = est.map_err(err)?;
    Ok((est.value, est.max_slope_samples))
}

#[pymodule]
fn stcnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTemplate>()?;
    m.add_class::<PyCertificate>()?;
    m.add_function(wrap_pyfunction!(margins, m)?)?;
    m.add_function(wrap_pyfunction!(room_step, m)?)?;
    m.add_function(wrap_pyfunction!(platoon_step, m)?)?;
    m.add_function(wrap_pyfunction!(grid_dispersion, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_lipschitz, m)?)?;
    Ok(())
}

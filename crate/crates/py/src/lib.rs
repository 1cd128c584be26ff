//! Python bindings: configs, domains, cone geometry and experiment runs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nta_core::config::{parse_config, parse_config_str, ExperimentConfig};
use nta_core::experiment::{self, Experiment};
use nta_core::geometry::{cone_contains, ConeSpec, Domain as _, GraphDomain};
use nta_core::report::InequalityReport;

fn err(e: nta_core::Error) -> PyErr {
    match e {
        nta_core::Error::Io { .. } | nta_core::Error::Precondition(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A validated experiment configuration.
#[pyclass(name = "Config", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    pub inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    pub fn load(path: PathBuf) -> PyResult<Self> {
        parse_config(&path).map(|inner| PyConfig { inner }).map_err(err)
    }

    #[staticmethod]
    pub fn parse(text: &str) -> PyResult<Self> {
        parse_config_str(text).map(|inner| PyConfig { inner }).map_err(err)
    }

    pub fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    pub fn dim(&self) -> usize {
        self.inner.domain.dim
    }

    #[getter]
    pub fn aperture(&self) -> f64 {
        self.inner.cone.aperture
    }

    #[getter]
    pub fn p_grid(&self) -> Vec<f64> {
        self.inner.sweep.p_grid.clone()
    }

    pub fn domain(&self) -> PyResult<PyDomain> {
        self.inner.build_domain().map(|inner| PyDomain { inner }).map_err(err)
    }
}

/// A Lipschitz graph domain `{x_d > psi(x')}`.
#[pyclass(name = "Domain", frozen)]
pub struct PyDomain {
    pub inner: GraphDomain,
}

fn point(x: &[f64]) -> PyResult<[f64; 3]> {
    if x.len() > 3 || x.len() < 2 {
        return Err(PyValueError::new_err("points have 2 or 3 coordinates"));
    }
    let mut p = [0.0; 3];
    p[..x.len()].copy_from_slice(x);
    Ok(p)
}

#[pymethods]
impl PyDomain {
    #[staticmethod]
    #[pyo3(signature = (dim, truncation = 8.0))]
    pub fn flat(dim: usize, truncation: f64) -> PyResult<Self> {
        GraphDomain::flat(dim, truncation).map(|inner| PyDomain { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (slope, period = 1.0, extent = 8.0, truncation = 8.0))]
    pub fn sawtooth(slope: f64, period: f64, extent: f64, truncation: f64) -> PyResult<Self> {
        GraphDomain::sawtooth(slope, period, extent, truncation)
            .map(|inner| PyDomain { inner })
            .map_err(err)
    }

    #[getter]
    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    pub fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    pub fn psi(&self, xp: Vec<f64>) -> f64 {
        self.inner.psi(&xp)
    }

    pub fn distance_to_boundary(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.distance_to_boundary(&point(&x)?).map_err(err)
    }

    pub fn vertical_gap(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.vertical_gap(&point(&x)?).map_err(err)
    }

    /// Whether `x` lies in the cone of aperture `aperture` at boundary point `z`.
    #[pyo3(signature = (z, x, aperture = None, height = None))]
    pub fn in_cone(&self, z: Vec<f64>, x: Vec<f64>, aperture: Option<f64>, height: Option<f64>) -> PyResult<bool> {
        let m = self.inner.lipschitz();
        let spec = ConeSpec::new(aperture.unwrap_or(ConeSpec::default_for(m).aperture), height, m).map_err(err)?;
        cone_contains(&self.inner, &point(&z)?, &spec, &point(&x)?).map_err(err)
    }
}

/// One measured instance of `left <= budget * right`.
#[pyclass(name = "Report", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyReport {
    pub name: String,
    pub left: f64,
    pub right: f64,
    pub ratio: f64,
    pub budget: f64,
    pub passed: bool,
    pub vacuous: bool,
    pub context_json: String,
}

impl From<&InequalityReport> for PyReport {
    fn from(r: &InequalityReport) -> Self {
        PyReport {
            name: r.name.clone(),
            left: r.left,
            right: r.right,
            ratio: r.ratio,
            budget: r.budget,
            passed: r.pass,
            vacuous: r.vacuous,
            context_json: serde_json::to_string(&r.context).unwrap_or_default(),
        }
    }
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!("Report({}, ratio={:.4e}, budget={}, passed={})", self.name, self.ratio, self.budget, self.passed)
    }
}

#[pyclass(name = "RunResult", frozen)]
pub struct PyRunResult {
    #[pyo3(get)]
    pub experiment: String,
    #[pyo3(get)]
    pub passed: bool,
    #[pyo3(get)]
    pub manifest_json: String,
    #[pyo3(get)]
    pub reports: Vec<PyReport>,
    pub artifacts: BTreeMap<String, String>,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    pub fn artifacts(&self) -> BTreeMap<String, String> {
        self.artifacts.clone()
    }

    /// Writes all artifacts into `dir`.
    pub fn write(&self, dir: PathBuf) -> PyResult<()> {
        experiment::write_artifacts(&dir, &self.artifacts).map_err(err)
    }
}

/// Runs one experiment; `seed` defaults to the config's seed.
#[pyfunction]
#[pyo3(signature = (config, experiment, seed = None))]
pub fn run(config: &PyConfig, experiment: &str, seed: Option<u64>) -> PyResult<PyRunResult> {
    let exp = Experiment::parse(experiment).map_err(err)?;
    let seed = seed.unwrap_or(config.inner.sweep.seed);
    let out = experiment::run(&config.inner, exp, seed).map_err(err)?;
    Ok(PyRunResult {
        experiment: exp.name().into(),
        passed: out.manifest.pass,
        manifest_json: out.artifacts.get("manifest.json").cloned().unwrap_or_default(),
        reports: out.checks.iter().map(|c| PyReport::from(&c.report)).collect(),
        artifacts: out.artifacts,
    })
}

#[pyfunction]
pub fn experiments() -> Vec<&'static str> {
    Experiment::ALL.iter().map(|e| e.name()).collect()
}

#[pymodule]
fn nta(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyDomain>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(experiments, m)?)?;
    Ok(())
}

//! Python bindings. Records cross the boundary as JSON and come back as
//! plain dicts and lists.

use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use risloc::channel::{ff_steering, nf_steering, CVector};
use risloc::fusion::{fuse as fuse_inputs, FusionInput, SearchBox};
use risloc::harness::{
    rmse_from_estimates, run_batch as run_batch_inner, sweep as sweep_inner, to_json_line, DictionaryBank,
    Engine as CoreEngine, PhasePolicy, ScenarioConfig as CoreConfig, SweepAxis, RUN_TAG,
};
use risloc::locator::{omp_localize as omp_inner, AtomLabel};
use risloc::scene::{element_grid, fraunhofer_distance as fraunhofer_inner, RisPose, SphericalCoord, Vec3};

create_exception!(risloc, RislocError, PyException);

fn err(e: risloc::Error) -> PyErr {
    RislocError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = to_json_line(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Scenario description; mirrors the TOML file.
#[pyclass(name = "ScenarioConfig", module = "risloc", skip_from_py_object)]
#[derive(Clone)]
struct PyScenarioConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyScenarioConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        CoreConfig::from_toml_str(text).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_path(path: PathBuf) -> PyResult<Self> {
        CoreConfig::from_path(&path).map(|inner| Self { inner }).map_err(err)
    }

    /// Raises `RislocError` when an invariant is violated.
    fn validate(&self) -> PyResult<()> {
        self.inner.build().map(|_| ()).map_err(err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }
    #[getter]
    fn trials(&self) -> usize {
        self.inner.trials
    }
    #[setter]
    fn set_trials(&mut self, v: usize) {
        self.inner.trials = v;
    }
    #[getter]
    fn cycles(&self) -> usize {
        self.inner.cycles
    }
    #[setter]
    fn set_cycles(&mut self, v: usize) {
        self.inner.cycles = v;
    }
    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db
    }
    #[setter]
    fn set_snr_db(&mut self, v: f64) {
        self.inner.snr_db = v;
    }
    #[getter]
    fn ff_only_mode(&self) -> bool {
        self.inner.ff_only_mode
    }
    #[setter]
    fn set_ff_only_mode(&mut self, v: bool) {
        self.inner.ff_only_mode = v;
    }
    #[getter]
    fn inter_ris_enabled(&self) -> bool {
        self.inner.inter_ris_enabled
    }
    #[setter]
    fn set_inter_ris_enabled(&mut self, v: bool) {
        self.inner.inter_ris_enabled = v;
    }
    /// `"optimized"` or `"random"`.
    #[getter]
    fn phase_policy(&self) -> &'static str {
        match self.inner.phase_policy {
            PhasePolicy::Optimized => "optimized",
            PhasePolicy::Random => "random",
        }
    }
    #[setter]
    fn set_phase_policy(&mut self, v: &str) -> PyResult<()> {
        self.inner.phase_policy = match v {
            "optimized" => PhasePolicy::Optimized,
            "random" => PhasePolicy::Random,
            _ => return Err(PyValueError::new_err(format!("unknown phase policy {v:?}"))),
        };
        Ok(())
    }
    #[getter]
    fn users(&self) -> Vec<[f64; 3]> {
        self.inner.users.clone()
    }
    #[setter]
    fn set_users(&mut self, v: Vec<[f64; 3]>) {
        self.inner.users = v;
    }

    fn __repr__(&self) -> String {
        format!(
            "ScenarioConfig(ris={}, users={}, cycles={}, trials={}, snr_db={})",
            self.inner.ris_in_use(),
            self.inner.users.len(),
            self.inner.cycles,
            self.inner.trials,
            self.inner.snr_db
        )
    }
}

/// A built scenario with its dictionaries; runs trials.
#[pyclass(name = "Engine", module = "risloc", frozen)]
struct PyEngine {
    inner: CoreEngine,
}

#[pymethods]
impl PyEngine {
    #[new]
    fn new(config: &PyScenarioConfig) -> PyResult<Self> {
        let scenario = config.inner.build().map_err(err)?;
        CoreEngine::new(scenario, &DictionaryBank::new()).map(|inner| Self { inner }).map_err(err)
    }

    /// Cycle records of one trial as a list of dicts.
    fn run_protocol<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let (records, failure) = py.detach(|| self.inner.run_protocol(seed));
        if let Some(e) = failure {
            return Err(err(e));
        }
        to_py(py, &records)
    }

    /// Trial summary: fused locations per cycle, final errors, CRBs.
    fn run_trial<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let (trial, _) = py.detach(|| self.inner.run_trial(0, seed));
        to_py(py, &trial)
    }

    #[getter]
    fn ris_count(&self) -> usize {
        self.inner.scenario.ris_count()
    }

    #[getter]
    fn wavelength(&self) -> f64 {
        self.inner.scenario.wavelength
    }

    /// `(near-field atoms, far-field atoms)` of RIS `m`.
    fn dictionary_size(&self, m: usize) -> PyResult<(usize, usize)> {
        if m >= self.inner.scenario.ris_count() {
            return Err(PyValueError::new_err(format!("no RIS {m}")));
        }
        let d = self.inner.dictionary(m);
        Ok((d.s1, d.s2))
    }
}

/// Runs `config.trials` trials; returns `{"rmse": float | None, "trials": [...]}`.
#[pyfunction]
fn run_batch<'py>(py: Python<'py>, config: &PyScenarioConfig) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let out = py.detach(|| -> risloc::Result<_> {
        let engine = CoreEngine::new(cfg.build()?, &DictionaryBank::new())?;
        Ok(run_batch_inner(&engine, cfg.seed, RUN_TAG, false))
    });
    let out = out.map_err(err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("rmse", out.rmse())?;
    dict.set_item("trials", to_py(py, &out.trials)?)?;
    Ok(dict.into_any())
}

/// One batch per value along `axis` (`"snr"`, `"cycles"` or `"num-ris"`).
#[pyfunction]
fn sweep<'py>(py: Python<'py>, config: &PyScenarioConfig, axis: &str, values: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let axis = match axis {
        "snr" => SweepAxis::Snr,
        "cycles" => SweepAxis::Cycles,
        "num-ris" | "num_ris" => SweepAxis::NumRis,
        _ => return Err(PyValueError::new_err(format!("unknown sweep axis {axis:?}"))),
    };
    let cfg = config.inner.clone();
    let rows = py.detach(|| sweep_inner(&cfg, axis, &values, &DictionaryBank::new())).map_err(err)?;
    to_py(py, &rows)
}

fn planar(rows: usize, cols: usize, spacing: f64) -> PyResult<RisPose> {
    RisPose::identity_at(Vec3::zeros(), rows, cols, spacing).map_err(err)
}

/// Fraunhofer distance of a `rows × cols` surface.
#[pyfunction]
fn fraunhofer_distance(rows: usize, cols: usize, spacing: f64, wavelength: f64) -> PyResult<f64> {
    Ok(fraunhofer_inner(&planar(rows, cols, spacing)?, wavelength))
}

/// Spherical-wavefront steering vector of a centered planar surface.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn near_field_steering(
    r: f64,
    theta: f64,
    phi: f64,
    rows: usize,
    cols: usize,
    spacing: f64,
    wavelength: f64,
) -> PyResult<Vec<Complex64>> {
    let s = SphericalCoord::new(r, theta, phi).map_err(err)?;
    let grid = element_grid(&planar(rows, cols, spacing)?);
    Ok(nf_steering(&s, &grid, wavelength).iter().copied().collect())
}

/// Plane-wave steering vector of a centered planar surface.
#[pyfunction]
fn far_field_steering(theta: f64, phi: f64, rows: usize, cols: usize, spacing: f64, wavelength: f64) -> PyResult<Vec<Complex64>> {
    let grid = element_grid(&planar(rows, cols, spacing)?);
    Ok(ff_steering(theta, phi, &grid, wavelength).iter().copied().collect())
}

/// OMP over the columns of `a` (a list of rows). Returns
/// `(winning column, support, coefficients)`.
#[pyfunction]
fn omp_localize(g: Vec<Complex64>, a: Vec<Vec<Complex64>>, sparsity: usize) -> PyResult<(usize, Vec<usize>, Vec<Complex64>)> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    if a.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows of `a` differ in length"));
    }
    let m = DMatrix::from_fn(rows, cols, |i, j| a[i][j]);
    let labels = vec![AtomLabel::Far { theta: 0.0, phi: 0.0 }; cols];
    let est = omp_inner(&CVector::from_vec(g), &m, sparsity, &labels, 0).map_err(err)?;
    Ok((est.atom, est.support, est.coefficients))
}

/// Box-constrained fusion of point estimates and `(anchor, direction)` rays.
#[pyfunction]
#[pyo3(signature = (points, rays, lower, upper))]
fn fuse(
    points: Vec<[f64; 3]>,
    rays: Vec<([f64; 3], [f64; 3])>,
    lower: [f64; 3],
    upper: [f64; 3],
) -> PyResult<[f64; 3]> {
    let mut inputs: Vec<FusionInput> = points.into_iter().map(|p| FusionInput::Point(v3(p))).collect();
    for (a, d) in rays {
        inputs.push(FusionInput::ray(v3(a), v3(d)).map_err(err)?);
    }
    let bx = SearchBox::new(v3(lower), v3(upper)).map_err(err)?;
    let p = fuse_inputs(&inputs, &bx).map_err(err)?;
    Ok([p.x, p.y, p.z])
}

/// `sqrt(mean ‖p̂ − p‖²)` over trials (outer list) and users.
#[pyfunction]
fn rmse(estimates: Vec<Vec<[f64; 3]>>, truth: Vec<[f64; 3]>) -> Option<f64> {
    let est: Vec<Vec<Vec3>> = estimates.into_iter().map(|t| t.into_iter().map(v3).collect()).collect();
    let truth: Vec<Vec3> = truth.into_iter().map(v3).collect();
    rmse_from_estimates(&est, &truth)
}

#[pymodule(name = "risloc")]
fn risloc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RislocError", m.py().get_type::<RislocError>())?;
    m.add_class::<PyScenarioConfig>()?;
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(run_batch, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(fraunhofer_distance, m)?)?;
    m.add_function(wrap_pyfunction!(near_field_steering, m)?)?;
    m.add_function(wrap_pyfunction!(far_field_steering, m)?)?;
    m.add_function(wrap_pyfunction!(omp_localize, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    Ok(())
}

//! Python bindings: thin wrappers around the core types plus the handful
//! of operations an analysis notebook actually needs (oracle moments,
//! sampling, estimation, Fock-space validation). Everything numerical
//! lives in the core crate; nothing here computes.

use std::collections::HashMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use stokesfit::estimator::{self, GaussianCase, SignalEstimate};
use stokesfit::fockcheck::{self, CalibrationReport, DEFAULT_DIM};
use stokesfit::moments::{self, Provenance, StokesMomentSet, DEFAULT_ANGLES};
use stokesfit::sampler::{self, SamplerMode};
use stokesfit::states::{self, GaussianParams, ReferenceSpec};

fn val_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "GaussianParams", module = "stokesfit", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyGaussianParams {
    inner: GaussianParams,
}

#[pymethods]
impl PyGaussianParams {
    /// Thermal/squeeze parametrization: eigenvalues are `b = r q` and
    /// `c = r / q`.
    #[new]
    #[pyo3(signature = (r, q, alpha = 0.0, d = 0.0, beta = 0.0))]
    fn new(r: f64, q: f64, alpha: f64, d: f64, beta: f64) -> PyResult<Self> {
        Ok(Self { inner: GaussianParams::new(r, q, alpha, d, beta).map_err(val_err)? })
    }

    /// Eigenvalue parametrization; requires `b >= c > 0`.
    #[staticmethod]
    #[pyo3(signature = (b, c, alpha = 0.0, d = 0.0, beta = 0.0))]
    fn from_eigen(b: f64, c: f64, alpha: f64, d: f64, beta: f64) -> PyResult<Self> {
        Ok(Self { inner: GaussianParams::from_eigen(b, c, alpha, d, beta).map_err(val_err)? })
    }

    #[staticmethod]
    fn vacuum() -> Self {
        Self { inner: GaussianParams::vacuum() }
    }

    #[staticmethod]
    fn thermal(r: f64) -> PyResult<Self> {
        Ok(Self { inner: GaussianParams::thermal(r).map_err(val_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (d, beta = 0.0))]
    fn coherent(d: f64, beta: f64) -> PyResult<Self> {
        Ok(Self { inner: GaussianParams::coherent(d, beta).map_err(val_err)? })
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn d(&self) -> f64 {
        self.inner.d()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b()
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c()
    }

    /// `b^2 + c^2 + d^2`.
    fn total_second_moment(&self) -> f64 {
        self.inner.total_second_moment()
    }

    fn mean_photons(&self) -> f64 {
        self.inner.mean_photons()
    }

    fn is_physical(&self) -> bool {
        self.inner.is_physical()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "GaussianParams(r={}, q={}, alpha={}, d={}, beta={})",
            p.r(),
            p.q(),
            p.alpha(),
            p.d(),
            p.beta()
        )
    }
}

#[pyclass(name = "ReferenceSpec", module = "stokesfit", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyReferenceSpec {
    inner: ReferenceSpec,
}

#[pymethods]
impl PyReferenceSpec {
    #[staticmethod]
    fn vacuum() -> Self {
        Self { inner: ReferenceSpec::vacuum() }
    }

    #[staticmethod]
    fn thermal(r: f64) -> PyResult<Self> {
        Ok(Self { inner: ReferenceSpec::thermal(r).map_err(val_err)? })
    }

    #[staticmethod]
    fn coherent(d: f64) -> PyResult<Self> {
        Ok(Self { inner: ReferenceSpec::coherent(d).map_err(val_err)? })
    }

    #[staticmethod]
    fn from_rqd(r: f64, q: f64, d: f64) -> PyResult<Self> {
        Ok(Self { inner: ReferenceSpec::from_rqd(r, q, d).map_err(val_err)? })
    }

    /// Build from the non-equilibrium ratio split: `delta` is the total
    /// NER, `gamma` the fraction carried by displacement.
    #[staticmethod]
    fn from_ner(r: f64, delta: f64, gamma: f64) -> PyResult<Self> {
        Ok(Self { inner: states::reference_from_ner(r, delta, gamma).map_err(val_err)? })
    }

    #[getter]
    fn params(&self) -> PyGaussianParams {
        PyGaussianParams { inner: *self.inner.params() }
    }

    fn is_classical(&self) -> bool {
        self.inner.is_classical()
    }

    fn is_thermal(&self) -> bool {
        self.inner.is_thermal()
    }

    fn __repr__(&self) -> String {
        format!("ReferenceSpec({})", self.inner.params())
    }
}

#[pyclass(name = "StokesMomentSet", module = "stokesfit", frozen)]
struct PyStokesMomentSet {
    inner: StokesMomentSet,
}

#[pymethods]
impl PyStokesMomentSet {
    #[getter]
    fn mean_s0(&self) -> f64 {
        self.inner.mean_s0
    }

    #[getter]
    fn second_s0(&self) -> f64 {
        self.inner.second_s0
    }

    #[getter]
    fn n_s0(&self) -> Option<u64> {
        self.inner.n_s0
    }

    #[getter]
    fn se_mean_s0(&self) -> Option<f64> {
        self.inner.se_mean_s0
    }

    #[getter]
    fn se_second_s0(&self) -> Option<f64> {
        self.inner.se_second_s0
    }

    #[getter]
    fn angles(&self) -> Vec<f64> {
        self.inner.entries.iter().map(|e| e.phi).collect()
    }

    #[getter]
    fn provenance(&self) -> &'static str {
        match self.inner.provenance {
            Provenance::Analytic => "analytic",
            Provenance::Empirical { model: moments::MeasurementModel::Symmetric } => {
                "empirical-symmetric"
            }
            Provenance::Empirical { model: moments::MeasurementModel::Quantum } => {
                "empirical-quantum"
            }
        }
    }

    /// Per-angle row as a dict; `n` is returned as a float count.
    fn row(&self, phi: f64) -> PyResult<HashMap<&'static str, Option<f64>>> {
        let e = self
            .inner
            .entry_at(phi)
            .ok_or_else(|| val_err(format!("no entry at phi = {phi}")))?;
        Ok(HashMap::from([
            ("phi", Some(e.phi)),
            ("mean_s2", Some(e.mean_s2)),
            ("second_s2", Some(e.second_s2)),
            ("n", e.n.map(|n| n as f64)),
            ("se_mean_s2", e.se_mean_s2),
            ("se_second_s2", e.se_second_s2),
            ("cov_mean_second", e.cov_mean_second),
        ]))
    }

    /// Serializes to the CSV format the command-line tool reads and writes.
    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        moments::write_moment_csv(&mut buf, &self.inner).map_err(val_err)?;
        String::from_utf8(buf).map_err(val_err)
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        let inner = moments::read_moment_csv(&mut text.as_bytes()).map_err(val_err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "StokesMomentSet(angles={:?}, mean_s0={}, second_s0={})",
            self.angles(),
            self.inner.mean_s0,
            self.inner.second_s0
        )
    }
}

#[pyclass(name = "SignalEstimate", module = "stokesfit", frozen)]
struct PySignalEstimate {
    inner: SignalEstimate,
}

#[pymethods]
impl PySignalEstimate {
    #[getter]
    fn feasibility(&self) -> String {
        self.inner.feasibility.to_string()
    }

    #[getter]
    fn b(&self) -> Option<f64> {
        self.inner.b
    }

    #[getter]
    fn c(&self) -> Option<f64> {
        self.inner.c
    }

    #[getter]
    fn alpha(&self) -> Option<f64> {
        self.inner.alpha
    }

    #[getter]
    fn d(&self) -> Option<f64> {
        self.inner.d
    }

    #[getter]
    fn beta(&self) -> Option<f64> {
        self.inner.beta
    }

    #[getter]
    fn beta_period(&self) -> Option<f64> {
        self.inner.beta_period
    }

    #[getter]
    fn energy(&self) -> Option<f64> {
        self.inner.energy
    }

    #[getter]
    fn mean_x(&self) -> Option<f64> {
        self.inner.mean_x
    }

    #[getter]
    fn mean_p(&self) -> Option<f64> {
        self.inner.mean_p
    }

    #[getter]
    fn var_x(&self) -> Option<f64> {
        self.inner.var_x
    }

    #[getter]
    fn var_p(&self) -> Option<f64> {
        self.inner.var_p
    }

    #[getter]
    fn cov_xp(&self) -> Option<f64> {
        self.inner.cov_xp
    }

    #[getter]
    fn second_x(&self) -> Option<f64> {
        self.inner.second_x
    }

    #[getter]
    fn second_p(&self) -> Option<f64> {
        self.inner.second_p
    }

    #[getter]
    fn second_xp(&self) -> Option<f64> {
        self.inner.second_xp
    }

    #[getter]
    fn physical(&self) -> Option<bool> {
        self.inner.physical
    }

    /// Delta-method standard errors keyed by field name; `None` where the
    /// data carried no sampling information.
    #[getter]
    fn se(&self) -> HashMap<&'static str, Option<f64>> {
        let s = &self.inner.se;
        HashMap::from([
            ("mean_x", s.mean_x),
            ("mean_p", s.mean_p),
            ("second_x", s.second_x),
            ("second_p", s.second_p),
            ("second_xp", s.second_xp),
            ("b", s.b),
            ("c", s.c),
            ("alpha", s.alpha),
            ("d", s.d),
            ("beta", s.beta),
            ("energy", s.energy),
        ])
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.iter().map(|w| format!("{w:?}")).collect()
    }

    #[getter]
    fn alternate(&self) -> Option<PySignalEstimate> {
        self.inner.alternate.as_ref().map(|a| PySignalEstimate { inner: (**a).clone() })
    }

    /// The multi-line report the command-line tool prints.
    fn format(&self) -> String {
        estimator::format_estimate(&self.inner)
    }

    fn __repr__(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map_or_else(|| "None".into(), |x| x.to_string())
        }
        format!(
            "SignalEstimate(feasibility='{}', b={}, c={}, alpha={}, d={}, beta={})",
            self.inner.feasibility,
            opt(self.inner.b),
            opt(self.inner.c),
            opt(self.inner.alpha),
            opt(self.inner.d),
            opt(self.inner.beta)
        )
    }
}

#[pyclass(name = "CalibrationReport", module = "stokesfit", frozen)]
struct PyCalibrationReport {
    inner: CalibrationReport,
}

#[pymethods]
impl PyCalibrationReport {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn kappa2(&self) -> f64 {
        self.inner.kappa2
    }

    #[getter]
    fn kappa2_residual(&self) -> f64 {
        self.inner.kappa2_residual
    }

    #[getter]
    fn s0_mode_correction(&self) -> f64 {
        self.inner.s0_mode_correction
    }

    #[getter]
    fn s0_residual(&self) -> f64 {
        self.inner.s0_residual
    }

    #[getter]
    fn f_quartic_coeff(&self) -> f64 {
        self.inner.f_quartic_coeff
    }

    #[getter]
    fn f_residual(&self) -> f64 {
        self.inner.f_residual
    }

    fn matches_verified(&self, tol: f64) -> bool {
        self.inner.matches_verified(tol)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "CalibrationReport(dim={}, kappa2={}, kappa2_residual={:e})",
            self.inner.dim, self.inner.kappa2, self.inner.kappa2_residual
        )
    }
}

fn angle_grid(angles: Option<Vec<f64>>) -> Vec<f64> {
    angles.unwrap_or_else(|| DEFAULT_ANGLES.to_vec())
}

fn parse_mode(mode: &str) -> PyResult<SamplerMode> {
    match mode {
        "wigner" => Ok(SamplerMode::Wigner),
        "calibrated" => Ok(SamplerMode::Calibrated { offset_bookkeeping: true }),
        other => Err(val_err(format!("unknown sampler mode '{other}' (wigner|calibrated)"))),
    }
}

/// Analytic quantum moments at the given reference phases.
#[pyfunction]
#[pyo3(signature = (signal, reference, angles = None))]
fn moment_set(
    signal: &PyGaussianParams,
    reference: &PyReferenceSpec,
    angles: Option<Vec<f64>>,
) -> PyStokesMomentSet {
    PyStokesMomentSet {
        inner: moments::moment_set(&signal.inner, &reference.inner, &angle_grid(angles)),
    }
}

#[pyfunction]
fn mean_s2(signal: &PyGaussianParams, reference: &PyReferenceSpec, phi: f64) -> f64 {
    moments::mean_s2(&signal.inner, &reference.inner, phi)
}

#[pyfunction]
fn second_s2(signal: &PyGaussianParams, reference: &PyReferenceSpec, phi: f64) -> f64 {
    moments::second_s2(&signal.inner, &reference.inner, phi)
}

#[pyfunction]
fn mean_s0(signal: &PyGaussianParams, reference: &PyReferenceSpec) -> f64 {
    moments::mean_s0(&signal.inner, &reference.inner)
}

#[pyfunction]
fn second_s0(signal: &PyGaussianParams, reference: &PyReferenceSpec) -> f64 {
    moments::second_s0(&signal.inner, &reference.inner)
}

/// Monte Carlo shots folded into empirical moments. `shots` is the total
/// budget, split evenly over the angle grid; runs are reproducible in
/// `(seed, base_stream)`.
#[pyfunction]
#[pyo3(signature = (signal, reference, shots, angles = None, seed = 1, mode = "wigner", base_stream = 0))]
fn sample_moments(
    signal: &PyGaussianParams,
    reference: &PyReferenceSpec,
    shots: u64,
    angles: Option<Vec<f64>>,
    seed: u64,
    mode: &str,
    base_stream: u64,
) -> PyResult<PyStokesMomentSet> {
    let plan = sampler::equal_split_plan(&angle_grid(angles), shots, base_stream);
    let inner =
        sampler::sample_moments(&signal.inner, &reference.inner, &plan, parse_mode(mode)?, seed)
            .map_err(val_err)?;
    Ok(PyStokesMomentSet { inner })
}

/// The standard estimation pipeline; degrades with the reference (see the
/// `feasibility` field of the result).
#[pyfunction]
fn estimate_general(
    ms: &PyStokesMomentSet,
    reference: &PyReferenceSpec,
) -> PyResult<PySignalEstimate> {
    let inner = estimator::estimate_general(&ms.inner, &reference.inner).map_err(val_err)?;
    Ok(PySignalEstimate { inner })
}

/// Independent reduction of the same data through an explicit cosine fit;
/// agrees with `estimate_general` exactly on noise-free input.
#[pyfunction]
fn estimate_cosine_fit(
    ms: &PyStokesMomentSet,
    reference: &PyReferenceSpec,
) -> PyResult<PySignalEstimate> {
    let inner = estimator::estimate_cosine_fit(&ms.inner, &reference.inner).map_err(val_err)?;
    Ok(PySignalEstimate { inner })
}

/// Shape recovery for a signal known to carry no displacement.
#[pyfunction]
fn estimate_squeezed_signal(
    ms: &PyStokesMomentSet,
    reference: &PyReferenceSpec,
) -> PyResult<PySignalEstimate> {
    let inner =
        estimator::estimate_squeezed_signal(&ms.inner, &reference.inner).map_err(val_err)?;
    Ok(PySignalEstimate { inner })
}

/// Displacement recovery for a signal with isotropic covariance.
#[pyfunction]
fn estimate_displaced_symmetric(
    ms: &PyStokesMomentSet,
    reference: &PyReferenceSpec,
) -> PyResult<PySignalEstimate> {
    let inner =
        estimator::estimate_displaced_symmetric(&ms.inner, &reference.inner).map_err(val_err)?;
    Ok(PySignalEstimate { inner })
}

/// Energy-only estimate; works with any reference.
#[pyfunction]
fn estimate_thermal_reference(
    ms: &PyStokesMomentSet,
    reference: &PyReferenceSpec,
) -> PySignalEstimate {
    PySignalEstimate { inner: estimator::estimate_thermal_reference(&ms.inner, &reference.inner) }
}

/// Magnitude recovery from the sum-observable second moment under a
/// Gaussian shape assumption; `case` is "squeezed" or "displaced-symmetric".
#[pyfunction]
fn estimate_gaussian_s02(
    ms: &PyStokesMomentSet,
    reference: &PyReferenceSpec,
    case: &str,
) -> PyResult<PySignalEstimate> {
    let case = match case {
        "squeezed" => GaussianCase::Squeezed,
        "displaced-symmetric" | "displaced" => GaussianCase::DisplacedSymmetric,
        other => {
            return Err(val_err(format!(
                "unknown case '{other}' (squeezed|displaced-symmetric)"
            )))
        }
    };
    let inner =
        estimator::estimate_gaussian_s02(&ms.inner, &reference.inner, case).map_err(val_err)?;
    Ok(PySignalEstimate { inner })
}

/// Determines the operator-ordering constants from an exact truncated
/// Fock-space computation and reports residuals against the verified
/// values.
#[pyfunction]
#[pyo3(signature = (dim = DEFAULT_DIM))]
fn calibrate_ordering(dim: usize) -> PyResult<PyCalibrationReport> {
    let inner = fockcheck::calibrate_ordering(dim).map_err(val_err)?;
    Ok(PyCalibrationReport { inner })
}

#[pymodule]
fn _native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGaussianParams>()?;
    m.add_class::<PyReferenceSpec>()?;
    m.add_class::<PyStokesMomentSet>()?;
    m.add_class::<PySignalEstimate>()?;
    m.add_class::<PyCalibrationReport>()?;
    m.add_function(wrap_pyfunction!(moment_set, m)?)?;
    m.add_function(wrap_pyfunction!(mean_s2, m)?)?;
    m.add_function(wrap_pyfunction!(second_s2, m)?)?;
    m.add_function(wrap_pyfunction!(mean_s0, m)?)?;
    m.add_function(wrap_pyfunction!(second_s0, m)?)?;
    m.add_function(wrap_pyfunction!(sample_moments, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_general, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_cosine_fit, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_squeezed_signal, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_displaced_symmetric, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_thermal_reference, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_gaussian_s02, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_ordering, m)?)?;
    m.add("DEFAULT_ANGLES", DEFAULT_ANGLES.to_vec())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

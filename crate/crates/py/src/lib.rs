use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use diqkd::commands;
use diqkd::finitekey::{self, EpsilonSet, FiniteSearch, FiniteSizeParams, KeyStatistics};
use diqkd::fock::C64;
use diqkd::measurements::{self as meas, MeasurementKernel};
use diqkd::photonics;
use diqkd::protocol::{self, ProtocolSearch};
use diqkd::Error;

fn to_pyerr(e: Error) -> PyErr {
    match e {
        Error::OutOfRange { .. }
        | Error::EpsilonConstraint { .. }
        | Error::Config(_)
        | Error::NonPhysicalScore(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Hands a serializable report to Python as plain dicts and lists.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let json = py.import_bound("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

fn complex_rows(py: Python<'_>, m: impl Fn(usize, usize) -> C64, n: usize) -> PyObject {
    let rows: Vec<Vec<num_complex::Complex64>> =
        (0..n).map(|i| (0..n).map(|j| m(i, j)).collect()).collect();
    rows.into_py(py)
}

fn search(n_starts: usize, seed: u64, max_evals: usize) -> ProtocolSearch {
    ProtocolSearch {
        n_starts,
        seed,
        max_evals,
        ..ProtocolSearch::default()
    }
}

#[pyclass(name = "SetupParams", module = "diqkd_py")]
#[derive(Clone)]
struct PySetupParams {
    inner: photonics::SetupParams,
}

#[pymethods]
impl PySetupParams {
    #[new]
    #[pyo3(signature = (T=0.005, L=0.0, alpha_att=0.2, eta_D=1.0, eta_tilde_L=1.0, eta_tilde_D=0.95, nu=5e6))]
    #[allow(non_snake_case)]
    fn new(
        T: f64,
        L: f64,
        alpha_att: f64,
        eta_D: f64,
        eta_tilde_L: f64,
        eta_tilde_D: f64,
        nu: f64,
    ) -> PyResult<Self> {
        let inner = photonics::SetupParams {
            transmittance: T,
            distance_km: L,
            attenuation: alpha_att,
            herald_efficiency: eta_D,
            local_efficiency: eta_tilde_L,
            local_detector_efficiency: eta_tilde_D,
            source_rate: nu,
        };
        inner.validate().map_err(to_pyerr)?;
        Ok(Self { inner })
    }

    #[getter]
    fn transmittance(&self) -> f64 {
        self.inner.transmittance
    }

    #[getter]
    fn distance_km(&self) -> f64 {
        self.inner.distance_km
    }

    #[getter]
    fn local_efficiency(&self) -> f64 {
        self.inner.local_efficiency
    }

    #[getter]
    fn local_detector_efficiency(&self) -> f64 {
        self.inner.local_detector_efficiency
    }

    #[getter]
    fn overall_local_efficiency(&self) -> f64 {
        self.inner.overall_local_efficiency()
    }

    /// Copy with `eta_tilde_L` set so that `eta_L` equals `eta_l`.
    fn with_overall_local_efficiency(&self, eta_l: f64) -> PyResult<Self> {
        let inner = self.inner.with_overall_local_efficiency(eta_l);
        inner.validate().map_err(to_pyerr)?;
        Ok(Self { inner })
    }

    fn with_distance(&self, l: f64) -> PyResult<Self> {
        let inner = photonics::SetupParams {
            distance_km: l,
            ..self.inner
        };
        inner.validate().map_err(to_pyerr)?;
        Ok(Self { inner })
    }

    fn herald_probability(&self) -> PyResult<f64> {
        photonics::heralding_probability(&self.inner).map_err(to_pyerr)
    }

    fn herald_probability_twophoton(&self) -> PyResult<f64> {
        photonics::heralding_probability_twophoton(&self.inner).map_err(to_pyerr)
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "SetupParams(T={}, L={}, alpha_att={}, eta_D={}, eta_tilde_L={}, eta_tilde_D={}, nu={})",
            p.transmittance,
            p.distance_km,
            p.attenuation,
            p.herald_efficiency,
            p.local_efficiency,
            p.local_detector_efficiency,
            p.source_rate
        )
    }
}

#[pyclass(name = "HeraldedState", module = "diqkd_py")]
struct PyHeraldedState {
    inner: photonics::HeraldedState,
}

#[pymethods]
impl PyHeraldedState {
    /// Leading-order state in `T`.
    #[staticmethod]
    fn analytic(params: &PySetupParams) -> PyResult<Self> {
        let inner = photonics::heralded_state_analytic(&params.inner).map_err(to_pyerr)?;
        Ok(Self { inner })
    }

    /// Full Fock-space simulation of the heralding chain.
    #[staticmethod]
    fn simulated(params: &PySetupParams) -> PyResult<Self> {
        let inner = photonics::heralded_state_oracle(&params.inner).map_err(to_pyerr)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn ideal() -> Self {
        Self {
            inner: photonics::HeraldedState::ideal(),
        }
    }

    fn with_local_loss(&self, eta: f64) -> PyResult<Self> {
        let inner = self.inner.with_local_loss(eta).map_err(to_pyerr)?;
        Ok(Self { inner })
    }

    #[getter]
    fn herald_prob(&self) -> f64 {
        self.inner.herald_prob
    }

    /// 4x4 density matrix in the basis |00>, |01>, |10>, |11>.
    fn matrix(&self, py: Python<'_>) -> PyObject {
        let q = self.inner.qubits();
        complex_rows(py, |i, j| q[(i, j)], 4)
    }

    fn trace_distance(&self, other: &PyHeraldedState) -> PyResult<f64> {
        self.inner
            .state
            .trace_distance(&other.inner.state)
            .map_err(to_pyerr)
    }
}

#[pyclass(name = "MeasurementSetting", module = "diqkd_py")]
#[derive(Clone)]
struct PyMeasurementSetting {
    inner: meas::MeasurementSetting,
}

#[pymethods]
impl PyMeasurementSetting {
    #[new]
    #[pyo3(signature = (xi_amp=0.0, xi_phase=0.0, alpha_amp=0.0, alpha_phase=0.0, detector_efficiency=1.0))]
    fn new(
        xi_amp: f64,
        xi_phase: f64,
        alpha_amp: f64,
        alpha_phase: f64,
        detector_efficiency: f64,
    ) -> Self {
        Self {
            inner: meas::MeasurementSetting {
                xi_amp,
                xi_phase,
                alpha_amp,
                alpha_phase,
                detector_efficiency,
            },
        }
    }

    /// `(click, no_click)` on the qubit block, each a 2x2 nested list.
    #[pyo3(signature = (cutoff=meas::DEFAULT_CUTOFF, local_efficiency=1.0))]
    fn povm(
        &self,
        py: Python<'_>,
        cutoff: usize,
        local_efficiency: f64,
    ) -> PyResult<(PyObject, PyObject)> {
        let dim = diqkd::fock::FockDim::new(cutoff).map_err(to_pyerr)?;
        let p = MeasurementKernel::new(dim)
            .qubit_povm(&self.inner)
            .with_local_loss(local_efficiency);
        Ok((
            complex_rows(py, |i, j| p.click[(i, j)], 2),
            complex_rows(py, |i, j| p.no_click[(i, j)], 2),
        ))
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "MeasurementSetting(xi_amp={}, xi_phase={}, alpha_amp={}, alpha_phase={}, detector_efficiency={})",
            s.xi_amp, s.xi_phase, s.alpha_amp, s.alpha_phase, s.detector_efficiency
        )
    }
}

#[pyfunction]
fn binary_entropy(p: f64) -> f64 {
    protocol::binary_entropy(p)
}

#[pyfunction]
fn entropy_bound(s: f64, q: f64) -> f64 {
    protocol::entropy_bound(s, q)
}

#[pyfunction]
fn asymptotic_rate(s: f64, key_entropy: f64, q: f64) -> PyResult<f64> {
    protocol::asymptotic_rate(s, key_entropy, q).map_err(to_pyerr)
}

/// Best preprocessing noise for CHSH score `s` and key distribution `p`
/// (`p[a][b]`, index 0 is the no-click outcome).
#[pyfunction]
fn optimize_noise(py: Python<'_>, s: f64, p: [[f64; 2]; 2]) -> PyResult<PyObject> {
    let o = protocol::optimize_noise(s, &p);
    let d = PyDict::new_bound(py);
    d.set_item("q", o.q)?;
    d.set_item("rate", o.rate)?;
    d.set_item("normalized", o.normalized)?;
    Ok(d.into_any().unbind())
}

/// Optimized CHSH score for the ideal state behind local loss `eta_tilde_L`.
#[pyfunction]
#[pyo3(signature = (eta_tilde_L, eta_tilde_D=0.95, n_starts=32, seed=7, max_evals=6000))]
#[allow(non_snake_case)]
fn optimize_chsh(
    py: Python<'_>,
    eta_tilde_L: f64,
    eta_tilde_D: f64,
    n_starts: usize,
    seed: u64,
    max_evals: usize,
) -> PyResult<(f64, PyObject)> {
    let (s, settings) = py
        .allow_threads(|| {
            commands::chsh_at(eta_tilde_L, eta_tilde_D, &search(n_starts, seed, max_evals))
        })
        .map_err(to_pyerr)?;
    Ok((s, to_py(py, &settings)?))
}

/// Asymptotic key-rate report for a setup, with all settings optimized.
#[pyfunction]
#[pyo3(signature = (params, n_starts=32, seed=7, max_evals=6000))]
fn optimize_setup(
    py: Python<'_>,
    params: &PySetupParams,
    n_starts: usize,
    seed: u64,
    max_evals: usize,
) -> PyResult<PyObject> {
    let p = params.inner;
    let report = py
        .allow_threads(|| protocol::optimize_setup(&p, &search(n_starts, seed, max_evals)))
        .map_err(to_pyerr)?;
    to_py(py, &report)
}

/// `eta_L` where the optimized asymptotic rate vanishes.
#[pyfunction]
#[pyo3(signature = (params, lo=0.75, hi=None, tol=commands::THRESHOLD_TOL, n_starts=32, seed=7, max_evals=6000))]
#[allow(clippy::too_many_arguments)]
fn key_threshold(
    py: Python<'_>,
    params: &PySetupParams,
    lo: f64,
    hi: Option<f64>,
    tol: f64,
    n_starts: usize,
    seed: u64,
    max_evals: usize,
) -> PyResult<PyObject> {
    let p = params.inner;
    let hi = hi.unwrap_or(p.local_detector_efficiency);
    let report = py
        .allow_threads(|| {
            commands::key_threshold(&p, &search(n_starts, seed, max_evals), lo, hi, tol)
        })
        .map_err(to_pyerr)?;
    to_py(py, &report)
}

#[pyfunction]
fn lambert_w0(x: f64) -> PyResult<f64> {
    finitekey::lambert_w0(x).map_err(to_pyerr)
}

#[pyfunction]
fn y_correction(x: f64) -> f64 {
    finitekey::y_correction(x)
}

#[pyfunction]
fn eta_bound(s: f64, q: f64) -> PyResult<f64> {
    finitekey::eta_bound(s, q).map_err(to_pyerr)
}

/// Finite-size key length at fixed parameters.
#[pyfunction]
#[pyo3(signature = (chsh, key_distribution, n, gamma=0.01, t=0.85, q_n=0.0, alpha_p=1.01, alpha_pp=1.001, k=finitekey::DEFAULT_SIGMAS))]
#[allow(clippy::too_many_arguments)]
fn key_length(
    py: Python<'_>,
    chsh: f64,
    key_distribution: [[f64; 2]; 2],
    n: f64,
    gamma: f64,
    t: f64,
    q_n: f64,
    alpha_p: f64,
    alpha_pp: f64,
    k: f64,
) -> PyResult<PyObject> {
    let stats = KeyStatistics {
        chsh,
        key_distribution,
    };
    let params = FiniteSizeParams {
        n,
        gamma,
        t,
        q_n,
        alpha_p,
        alpha_pp,
        epsilons: EpsilonSet::default(),
        k,
    };
    to_py(
        py,
        &finitekey::key_length(&stats, &params).map_err(to_pyerr)?,
    )
}

/// Finite-size key length with `(gamma, t, q_n, alpha', alpha'')` optimized.
#[pyfunction]
#[pyo3(signature = (chsh, key_distribution, n, n_starts=16, seed=11, max_evals=3000))]
fn optimize_finite(
    py: Python<'_>,
    chsh: f64,
    key_distribution: [[f64; 2]; 2],
    n: f64,
    n_starts: usize,
    seed: u64,
    max_evals: usize,
) -> PyResult<PyObject> {
    let stats = KeyStatistics {
        chsh,
        key_distribution,
    };
    let s = FiniteSearch {
        n_starts,
        seed,
        max_evals,
    };
    let o = py
        .allow_threads(|| {
            finitekey::optimize_finite(
                &stats,
                n,
                &EpsilonSet::default(),
                finitekey::DEFAULT_SIGMAS,
                &s,
            )
        })
        .map_err(to_pyerr)?;
    to_py(py, &o)
}

/// Soundness of the default epsilon set.
#[pyfunction]
fn soundness() -> f64 {
    EpsilonSet::default().soundness()
}

#[pymodule]
fn diqkd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySetupParams>()?;
    m.add_class::<PyHeraldedState>()?;
    m.add_class::<PyMeasurementSetting>()?;
    m.add_function(wrap_pyfunction!(binary_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_bound, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_rate, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_noise, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_chsh, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_setup, m)?)?;
    m.add_function(wrap_pyfunction!(key_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(lambert_w0, m)?)?;
    m.add_function(wrap_pyfunction!(y_correction, m)?)?;
    m.add_function(wrap_pyfunction!(eta_bound, m)?)?;
    m.add_function(wrap_pyfunction!(key_length, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_finite, m)?)?;
    m.add_function(wrap_pyfunction!(soundness, m)?)?;
    m.add("TSIRELSON", protocol::TSIRELSON)?;
    Ok(())
}

//! Python bindings. Build with `--features extension-module` and import as
//! `photonstat`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

use photonstat::correlator::{self, CorrelationHistogram};
use photonstat::emitter::{self, FourLevelParams};
use photonstat::fitting::{self, Lineshape};
use photonstat::sim::{self, DetectorModel, Excitation, SimConfig};
use photonstat::spectral::{self, Spectrum};
use photonstat::timetag::{Channel, TimeTagStream};

fn err(e: photonstat::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_py_any(py)?,
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_py_any(py)?,
            (_, Some(u)) => u.into_py_any(py)?,
            _ => n.as_f64().unwrap_or(f64::NAN).into_py_any(py)?,
        },
        Value::String(s) => s.into_py_any(py)?,
        Value::Array(a) => {
            let l = PyList::empty(py);
            for x in a {
                l.append(to_py(py, x)?)?;
            }
            l.into_py_any(py)?
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_py_any(py)?
        }
    })
}

fn json_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

fn shape(name: &str) -> PyResult<Lineshape> {
    match name {
        "lorentzian" => Ok(Lineshape::Lorentzian),
        "gaussian" => Ok(Lineshape::Gaussian),
        other => Err(PyValueError::new_err(format!("unknown lineshape `{other}`"))),
    }
}

/// Emitter level scheme with transition rates in s⁻¹.
#[pyclass(name = "LevelSystem", module = "photonstat", frozen)]
struct PyLevelSystem {
    inner: emitter::LevelSystem,
}

#[pymethods]
impl PyLevelSystem {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyLevelSystem { inner })
    }

    #[staticmethod]
    fn two_level(pump: f64, decay: f64) -> PyResult<Self> {
        Ok(PyLevelSystem { inner: emitter::LevelSystem::two_level(pump, decay).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (pump_rate, k_rad, k24, k42, k43, k31))]
    fn four_level(pump_rate: f64, k_rad: f64, k24: f64, k42: f64, k43: f64, k31: f64) -> PyResult<Self> {
        let p = FourLevelParams { pump_rate, k_rad, k24, k42, k43, k31, zpl_energy_ev: None };
        Ok(PyLevelSystem { inner: emitter::build_four_level(&p).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    fn rate(&self, from_state: usize, to_state: usize) -> PyResult<f64> {
        let n = self.inner.n_states();
        if from_state >= n || to_state >= n {
            return Err(PyValueError::new_err(format!("state index outside 0..{n}")));
        }
        Ok(self.inner.rate(from_state, to_state))
    }

    fn steady_state(&self) -> PyResult<Vec<f64>> {
        emitter::steady_state(&self.inner).map_err(err)
    }

    /// g²(τ) at delays given in seconds.
    fn g2(&self, taus_s: Vec<f64>) -> PyResult<Vec<f64>> {
        emitter::g2_analytic(&self.inner, &taus_s).map_err(err)
    }

    /// 1/e time of the antibunching dip in seconds.
    fn antibunching_time(&self) -> PyResult<f64> {
        emitter::antibunching_time(&self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("LevelSystem(n_states={})", self.inner.n_states())
    }
}

/// Simulates an HBT measurement; returns tag lists in picoseconds.
#[pyfunction]
#[pyo3(signature = (system, duration_s, seed, pump_rate=None, pulsed=false, background_rate=0.0, ideal_detectors=false))]
fn simulate(
    py: Python<'_>,
    system: &PyLevelSystem,
    duration_s: f64,
    seed: u64,
    pump_rate: Option<f64>,
    pulsed: bool,
    background_rate: f64,
    ideal_detectors: bool,
) -> PyResult<Py<PyAny>> {
    let (src, dst) = system.inner.radiative();
    let pump = pump_rate.unwrap_or(system.inner.rate(dst, src));
    let excitation = if pulsed { Excitation::pulsed(pump) } else { Excitation::Cw { pump_rate: pump } };
    let det = if ideal_detectors { DetectorModel::ideal() } else { DetectorModel::apd() };
    let cfg = SimConfig { duration_s, seed, excitation, background_rate };
    let out = py.detach(|| sim::simulate(&system.inner, &det, &cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("a", out.a.timestamps().to_vec())?;
    d.set_item("b", out.b.timestamps().to_vec())?;
    d.set_item("sync", out.sync.as_ref().map(|s| s.timestamps().to_vec()))?;
    d.set_item("duration_ps", out.a.duration_ps())?;
    d.set_item("emitted_photons", out.stats.emitted_photons)?;
    Ok(d.into_any().unbind())
}

/// Coincidence histogram, normalised to g²(τ).
#[pyclass(name = "Histogram", module = "photonstat", frozen)]
struct PyHistogram {
    inner: CorrelationHistogram,
}

#[pymethods]
impl PyHistogram {
    #[getter]
    fn bin_width_ps(&self) -> u64 {
        self.inner.bin_width_ps
    }

    /// Left bin edges.
    #[getter]
    fn tau_ps(&self) -> Vec<i64> {
        (0..self.inner.bins.len()).map(|i| self.inner.tau_left_ps(i)).collect()
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.bins.clone()
    }

    #[getter]
    fn g2(&self) -> Option<Vec<f64>> {
        self.inner.normalized.clone()
    }

    /// Antibunching fit; returns a dict with the fit and the verdict.
    fn fit(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let f = fitting::fit_g2(&self.inner).map_err(err)?;
        json_py(py, &f)
    }

    fn __len__(&self) -> usize {
        self.inner.bins.len()
    }
}

#[pyfunction]
#[pyo3(signature = (a, b, bin_width_ps=256, max_tau_ps=100_000, duration_ps=None))]
fn correlate(
    py: Python<'_>,
    a: Vec<u64>,
    b: Vec<u64>,
    bin_width_ps: u64,
    max_tau_ps: u64,
    duration_ps: Option<u64>,
) -> PyResult<PyHistogram> {
    let d = duration_ps.unwrap_or_else(|| a.last().copied().unwrap_or(0).max(b.last().copied().unwrap_or(0)));
    let h = py
        .detach(|| -> photonstat::Result<_> {
            let sa = TimeTagStream::new(Channel::A, a, d)?;
            let sb = TimeTagStream::new(Channel::B, b, d)?;
            let h = correlator::correlate(&sa, &sb, bin_width_ps, max_tau_ps)?;
            correlator::normalize(&h)
        })
        .map_err(err)?;
    Ok(PyHistogram { inner: h })
}

/// Decay histogram against sync tags plus the tail fit.
#[pyfunction]
#[pyo3(signature = (photons, sync, bin_width_ps, fit_start_ps, window_ps=None))]
fn lifetime(
    py: Python<'_>,
    photons: Vec<u64>,
    sync: Vec<u64>,
    bin_width_ps: u64,
    fit_start_ps: f64,
    window_ps: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let d = photons.last().copied().unwrap_or(0).max(sync.last().copied().unwrap_or(0));
    let h = correlator::lifetime_histogram_tags(&photons, &sync, bin_width_ps, window_ps, d).map_err(err)?;
    let fit = fitting::fit_lifetime(&h, fit_start_ps).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("delay_ps", (0..h.bins.len()).map(|i| h.delay_left_ps(i)).collect::<Vec<_>>())?;
    out.set_item("counts", h.bins.clone())?;
    out.set_item("fit", json_py(py, &fit)?)?;
    Ok(out.into_any().unbind())
}

#[pyfunction]
fn fit_quenching(py: Python<'_>, temperature_k: Vec<f64>, intensity: Vec<f64>) -> PyResult<Py<PyAny>> {
    if temperature_k.len() != intensity.len() {
        return Err(PyValueError::new_err("temperature and intensity lengths differ"));
    }
    let series: Vec<(f64, f64)> = temperature_k.into_iter().zip(intensity).collect();
    json_py(py, &fitting::fit_quenching(&series).map_err(err)?)
}

#[pyfunction]
fn rho_from_sb(s: f64, b: f64) -> PyResult<f64> {
    fitting::rho_from_sb(s, b).map_err(err)
}

#[pyfunction]
fn correct_background(g2: f64, rho: f64) -> PyResult<f64> {
    fitting::correct_background(g2, rho).map_err(err)
}

#[pyfunction]
fn huang_rhys(i_zpl: f64, i_psb: f64) -> PyResult<f64> {
    spectral::huang_rhys(i_zpl, i_psb).map_err(err)
}

/// Zero-phonon-line fit; the window defaults to one derived from the peak.
#[pyfunction]
#[pyo3(signature = (energy_ev, counts, window_ev=None, lineshape="lorentzian"))]
fn fit_zpl(
    py: Python<'_>,
    energy_ev: Vec<f64>,
    counts: Vec<f64>,
    window_ev: Option<(f64, f64)>,
    lineshape: &str,
) -> PyResult<Py<PyAny>> {
    let s = Spectrum::new(energy_ev, counts).map_err(err)?;
    let w = window_ev.unwrap_or_else(|| spectral::default_zpl_window(&s));
    let p = spectral::fit_zpl(&s, w, shape(lineshape)?).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("center_ev", p.center_ev)?;
    d.set_item("fwhm_ev", p.fwhm_ev)?;
    d.set_item("amplitude", p.amplitude)?;
    d.set_item("area", p.area)?;
    d.set_item("converged", p.converged)?;
    d.set_item("fit", json_py(py, &p.fit)?)?;
    Ok(d.into_any().unbind())
}

#[pymodule(name = "photonstat")]
fn photonstat_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyLevelSystem>()?;
    m.add_class::<PyHistogram>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(correlate, m)?)?;
    m.add_function(wrap_pyfunction!(lifetime, m)?)?;
    m.add_function(wrap_pyfunction!(fit_quenching, m)?)?;
    m.add_function(wrap_pyfunction!(fit_zpl, m)?)?;
    m.add_function(wrap_pyfunction!(rho_from_sb, m)?)?;
    m.add_function(wrap_pyfunction!(correct_background, m)?)?;
    m.add_function(wrap_pyfunction!(huang_rhys, m)?)?;
    Ok(())
}

//! Python module `pnrtomo_py`. Complex arguments are `β` or `α₀` in the
//! units of the measured grid, where a coherent peak sits at `β = √η t α₀`.

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pnrtomo::fitting::{fit_gaussian_with, FitOptions};
use pnrtomo::fockspace::{parity_wigner, WignerConvention};
use pnrtomo::pulse_pipeline::{process_packet as run_pipeline, CalibrationConfig, ThresholdSource};
use pnrtomo::tes_sim::read_packet;
use pnrtomo::tomography::{
    measured_wigner_theory, run_scan_with, ExperimentModel, ScanGeometry, ScanMode, ScanOptions,
    SourceState, WignerGrid,
};
use pnrtomo::{ComplexAmplitude, DensityMatrix, ErrorKind};

fn py_err(e: pnrtomo::Error) -> PyErr {
    match e.kind() {
        ErrorKind::Input => PyValueError::new_err(e.to_string()),
        ErrorKind::Io => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn model(eta: f64, v: f64, t2: f64) -> PyResult<ExperimentModel> {
    ExperimentModel::new(eta, v, t2).map_err(py_err)
}

/// Closed-form measured Wigner value of a coherent source.
#[pyfunction]
#[pyo3(signature = (beta, alpha0, eta=1.0, v=1.0, t2=1.0))]
fn measured_wigner(beta: Complex64, alpha0: Complex64, eta: f64, v: f64, t2: f64) -> PyResult<f64> {
    Ok(measured_wigner_theory(
        ComplexAmplitude::from_alpha(beta),
        ComplexAmplitude::from_alpha(alpha0),
        &model(eta, v, t2)?,
    ))
}

/// Peak-one Wigner value of the Fock state `|n⟩` at `α`.
#[pyfunction]
#[pyo3(signature = (n, alpha, working_cutoff=60))]
fn fock_wigner(n: usize, alpha: Complex64, working_cutoff: usize) -> PyResult<f64> {
    let rho = DensityMatrix::fock(n, working_cutoff);
    parity_wigner(
        &rho,
        ComplexAmplitude::from_alpha(alpha),
        working_cutoff,
        WignerConvention::PeakOne,
    )
    .map_err(py_err)
}

/// Measured parity grid.
#[pyclass(module = "pnrtomo_py")]
struct Grid {
    inner: WignerGrid,
}

#[pymethods]
impl Grid {
    #[staticmethod]
    #[pyo3(signature = (path, overflow_limit=pnrtomo::tomography::DEFAULT_OVERFLOW_LIMIT))]
    fn read_csv(path: &str, overflow_limit: f64) -> PyResult<Self> {
        let inner = WignerGrid::read_csv(path.as_ref(), overflow_limit).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv(path.as_ref()).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.points.len()
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.points.iter().map(|p| p.q()).collect()
    }

    #[getter]
    fn p(&self) -> Vec<f64> {
        self.inner.points.iter().map(|p| p.p()).collect()
    }

    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.points.iter().map(|p| p.w).collect()
    }

    #[getter]
    fn flagged(&self) -> Vec<bool> {
        self.inner.points.iter().map(|p| p.flagged).collect()
    }

    /// Gaussian fit over the unflagged points, as a dict of values and
    /// standard errors.
    #[pyo3(signature = (weighted=false))]
    fn fit<'py>(&self, py: Python<'py>, weighted: bool) -> PyResult<Bound<'py, PyDict>> {
        let opts = FitOptions {
            weighted,
            ..FitOptions::default()
        };
        let f = fit_gaussian_with(&self.inner, &opts).map_err(py_err)?;
        let d = PyDict::new(py);
        for (k, v, e) in [
            ("a", f.model.a, f.errors.a),
            ("b", f.model.b, f.errors.b),
            ("m", f.model.m, f.errors.m),
            ("q0", f.model.q0, f.errors.q0),
            ("p0", f.model.p0, f.errors.p0),
            ("beta0", f.amplitude(), f.errors.amplitude),
        ] {
            d.set_item(k, v)?;
            d.set_item(format!("{k}_err"), e)?;
        }
        d.set_item("r_squared", f.r_squared)?;
        d.set_item("n_points", f.n_points)?;
        Ok(d)
    }
}

/// Polar scan of a coherent source (`alpha0`) or, with `alpha0=None`,
/// the vacuum. `mode` is `"analytic"` or `"monte_carlo"`.
#[pyfunction]
#[pyo3(signature = (alpha0=None, n_amplitude=20, n_phase=30, max_amplitude=2.5,
                    eta=1.0, v=1.0, t2=1.0, mode="analytic", bins=8388, seed=1))]
#[allow(clippy::too_many_arguments)]
fn scan(
    alpha0: Option<Complex64>,
    n_amplitude: usize,
    n_phase: usize,
    max_amplitude: f64,
    eta: f64,
    v: f64,
    t2: f64,
    mode: &str,
    bins: usize,
    seed: u64,
) -> PyResult<Grid> {
    let source = match alpha0 {
        Some(a) => SourceState::Coherent {
            alpha0: ComplexAmplitude::from_alpha(a),
        },
        None => SourceState::Vacuum,
    };
    let mode = match mode {
        "analytic" => ScanMode::Analytic,
        "monte_carlo" => ScanMode::MonteCarlo { bins, seed },
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let geometry = ScanGeometry {
        n_amplitude,
        n_phase,
        max_amplitude,
    };
    geometry.validate().map_err(py_err)?;
    let inner = run_scan_with(
        &source,
        &geometry,
        &model(eta, v, t2)?,
        mode,
        &ScanOptions::default(),
    )
    .map_err(py_err)?;
    Ok(Grid { inner })
}

/// Runs the pulse pipeline on a packet file. `thresholds` is `"linear"` or
/// `"histogram"`.
#[pyfunction]
#[pyo3(signature = (path, thresholds="linear"))]
fn process_packet<'py>(
    py: Python<'py>,
    path: &str,
    thresholds: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let source = match thresholds {
        "linear" => ThresholdSource::Linear,
        "histogram" => ThresholdSource::Histogram(CalibrationConfig::default()),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown thresholds {other:?}"
            )))
        }
    };
    let (packet, _) = read_packet(path.as_ref()).map_err(py_err)?;
    let out = run_pipeline(&packet, &Default::default(), &source).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("events", out.events.len())?;
    d.set_item(
        "photons",
        out.photons
            .iter()
            .map(|p| p.unwrap_or(0) as u64)
            .sum::<u64>(),
    )?;
    d.set_item(
        "edges",
        out.events.iter().map(|e| e.sample).collect::<Vec<_>>(),
    )?;
    d.set_item("counts", out.counts.counts.clone())?;
    d.set_item("overflow", out.counts.overflow.clone())?;
    Ok(d)
}

#[pymodule]
fn pnrtomo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(measured_wigner, m)?)?;
    m.add_function(wrap_pyfunction!(fock_wigner, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(process_packet, m)?)?;
    m.add_class::<Grid>()?;
    Ok(())
}

//! Python bindings: volumes, estimators, background identification,
//! local maps, phantoms and bias correction.

use dmri_noise::background_id::{self, IdentificationConfig, SliceAxis};
use dmri_noise::bias_correction::{self, CorrectionInput};
use dmri_noise::distributions::{ncchi_mean as ncchi_mean_core, NcChiParams};
use dmri_noise::estimators::{self, Method, SampleSet};
use dmri_noise::local_maps;
use dmri_noise::phantom::{self, PhantomSpec, SignalModel, TauProfile};
use dmri_noise::volume_io::{self, DType, Volume4D};
use dmri_noise::Error;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Load(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(text: &str, what: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    text.parse()
        .map_err(|e| PyValueError::new_err(format!("bad {what} `{text}`: {e}")))
}

/// A 4D magnitude volume, x fastest, stored in double precision.
#[pyclass(name = "Volume", module = "dmri_noise_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyVolume {
    inner: Volume4D,
}

#[pymethods]
impl PyVolume {
    #[new]
    fn new(dims: [usize; 4], data: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: Volume4D::new(dims, data).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let inner = volume_io::read_volume(path).map_err(|e| to_py(e.into()))?;
        Ok(Self { inner })
    }

    #[pyo3(signature = (path, dtype = "f32"))]
    fn write(&self, path: &str, dtype: &str) -> PyResult<()> {
        let dtype: DType = parse(dtype, "dtype")?;
        volume_io::write_volume(&self.inner, path, dtype).map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> [usize; 4] {
        self.inner.dims()
    }

    #[getter]
    fn voxel_dims(&self) -> [f64; 3] {
        self.inner.voxel_dims
    }

    /// Samples as a flat list, x fastest and volume index slowest.
    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn frame(&self, k: usize) -> PyResult<Vec<f64>> {
        if k >= self.inner.k() {
            return Err(PyValueError::new_err(format!(
                "volume {k} out of range ({} volumes)",
                self.inner.k()
            )));
        }
        Ok(self.inner.frame(k).to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Volume(dims={:?})", self.inner.dims())
    }
}

#[pyclass(name = "EstimateResult", module = "dmri_noise_py", frozen, get_all)]
struct PyEstimate {
    sigma_g: f64,
    n_dof: f64,
    method: String,
    iterations: usize,
    converged: bool,
    zeros_excluded: usize,
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "EstimateResult(sigma_g={}, n_dof={}, method='{}')",
            self.sigma_g, self.n_dof, self.method
        )
    }
}

/// Estimates `(σ_g, N)` from noise-only magnitude samples.
#[pyfunction]
#[pyo3(signature = (samples, method = "moments"))]
fn estimate(py: Python<'_>, samples: Vec<f64>, method: &str) -> PyResult<PyEstimate> {
    let method: Method = parse(method, "method")?;
    let r = py
        .detach(|| SampleSet::new(samples).and_then(|s| estimators::estimate(&s, method)))
        .map_err(to_py)?;
    Ok(PyEstimate {
        sigma_g: r.sigma_g,
        n_dof: r.n_dof,
        method: r.method.to_string(),
        iterations: r.iterations,
        converged: r.converged,
        zeros_excluded: r.zeros_excluded,
    })
}

#[pyclass(name = "SliceEstimate", module = "dmri_noise_py", frozen, get_all)]
struct PySlice {
    slice_index: usize,
    sigma_g: Option<f64>,
    n_dof: Option<f64>,
    voxel_count: usize,
    converged: bool,
    outer_iterations: usize,
    error: Option<String>,
}

#[pymethods]
impl PySlice {
    fn __repr__(&self) -> String {
        match (&self.error, self.sigma_g, self.n_dof) {
            (None, Some(s), Some(n)) => format!("SliceEstimate({}, sigma_g={s}, n_dof={n})", self.slice_index),
            _ => format!("SliceEstimate({}, error={:?})", self.slice_index, self.error),
        }
    }
}

/// Per-slice background identification and estimation.
#[pyfunction]
#[pyo3(signature = (volume, method = "moments", p = 0.05, grid_length = 50, n_min = 1.0, n_max = 12.0, axis = "auto", exclude_volumes = Vec::new()))]
#[allow(clippy::too_many_arguments)]
fn identify(
    py: Python<'_>,
    volume: &PyVolume,
    method: &str,
    p: f64,
    grid_length: usize,
    n_min: f64,
    n_max: f64,
    axis: &str,
    exclude_volumes: Vec<usize>,
) -> PyResult<(Vec<PySlice>, Vec<bool>)> {
    let method: Method = parse(method, "method")?;
    let config = IdentificationConfig {
        p,
        grid_length,
        n_min,
        n_max,
        slice_axis: parse::<SliceAxis>(axis, "axis")?,
        exclude_volumes,
        ..IdentificationConfig::default()
    };
    let id = py
        .detach(|| background_id::identify_volume(&volume.inner, &config, method))
        .map_err(to_py)?;
    let slices = id
        .slices
        .iter()
        .enumerate()
        .map(|(s, r)| match r {
            Ok(r) => PySlice {
                slice_index: s,
                sigma_g: Some(r.estimate.sigma_g),
                n_dof: Some(r.estimate.n_dof),
                voxel_count: r.voxel_count(),
                converged: r.converged,
                outer_iterations: r.outer_iterations,
                error: None,
            },
            Err(e) => PySlice {
                slice_index: s,
                sigma_g: None,
                n_dof: None,
                voxel_count: 0,
                converged: false,
                outer_iterations: 0,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mask = id.mask(volume.inner.spatial_dims()).values().to_vec();
    Ok((slices, mask))
}

/// Voxelwise `(σ_g, N)` maps as flat lists (NaN where no estimate exists).
#[pyfunction]
#[pyo3(signature = (volume, window = [3, 3, 3], method = "moments"))]
fn estimate_field(
    py: Python<'_>,
    volume: &PyVolume,
    window: [usize; 3],
    method: &str,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let method: Method = parse(method, "method")?;
    let field = py
        .detach(|| local_maps::estimate_field(&volume.inner, window, method))
        .map_err(to_py)?;
    Ok((field.sigma.into_values(), field.n_dof.into_values()))
}

#[pyclass(name = "Phantom", module = "dmri_noise_py", frozen, get_all)]
struct PyPhantom {
    noisy: PyVolume,
    noiseless: PyVolume,
    sigma_true: Vec<f64>,
    object_mask: Vec<bool>,
    sigma_g: f64,
    n_dof: f64,
    mean_signal: f64,
}

fn run_phantom(py: Python<'_>, spec: PhantomSpec) -> PyResult<PyPhantom> {
    let out = py.detach(|| phantom::generate(&spec)).map_err(to_py)?;
    Ok(PyPhantom {
        noisy: PyVolume { inner: out.noisy },
        noiseless: PyVolume { inner: out.noiseless },
        sigma_true: out.sigma_true.into_values(),
        object_mask: out.object_mask.values().to_vec(),
        sigma_g: out.sigma_g,
        n_dof: out.n_true,
        mean_signal: out.mean_signal,
    })
}

/// Synthetic phantom with known noise parameters.
#[pyfunction]
#[pyo3(signature = (shape, k_volumes, snr = 30.0, n_dof = 1.0, profile = "stationary", seed = 42, signal = "diffusion_sphere", intensity = 600.0, radius = 1.0, b_value = 1000.0, noise_sigma = None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    shape: [usize; 3],
    k_volumes: usize,
    snr: f64,
    n_dof: f64,
    profile: &str,
    seed: u64,
    signal: &str,
    intensity: f64,
    radius: f64,
    b_value: f64,
    noise_sigma: Option<f64>,
) -> PyResult<PyPhantom> {
    let tau = match profile {
        "stationary" => TauProfile::Stationary,
        "sphere_ramp" | "sphere-ramp" => TauProfile::sphere_ramp(),
        other => return Err(PyValueError::new_err(format!("unknown profile `{other}`"))),
    };
    let signal = match signal {
        "uniform" => SignalModel::Uniform { value: intensity },
        "sphere" => SignalModel::Sphere {
            inside: intensity,
            outside: 0.0,
            radius,
        },
        "diffusion_sphere" | "diffusion-sphere" => SignalModel::DiffusionSphere {
            s0: intensity,
            radius,
            b_value,
        },
        other => return Err(PyValueError::new_err(format!("unknown signal `{other}`"))),
    };
    run_phantom(
        py,
        PhantomSpec {
            shape,
            k_volumes,
            signal,
            snr,
            n_dof,
            tau,
            seed,
            noise_sigma,
        },
    )
}

/// Phantom from a JSON specification (the format `dmri-noise simulate --spec` reads).
#[pyfunction]
fn simulate_spec(py: Python<'_>, spec_json: &str) -> PyResult<PyPhantom> {
    let spec: PhantomSpec = serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    run_phantom(py, spec)
}

/// Bias-corrected signal `η` for a first-moment estimate `m_hat`.
#[pyfunction]
fn correct_eta(m_hat: f64, sigma_g: f64, n_dof: f64) -> PyResult<f64> {
    bias_correction::correct_eta(
        CorrectionInput { m_hat, sigma_g, n_dof },
        bias_correction::DEFAULT_TOLERANCE,
        bias_correction::DEFAULT_MAX_ITERATIONS,
    )
    .map(|o| o.eta)
    .map_err(to_py)
}

/// Mean magnitude of the noncentral chi distribution.
#[pyfunction]
fn ncchi_mean(eta: f64, sigma_g: f64, n_dof: f64) -> PyResult<f64> {
    Ok(ncchi_mean_core(&NcChiParams::new(eta, sigma_g, n_dof).map_err(to_py)?))
}

/// Correction factor `ξ(η | σ_g, N)`.
#[pyfunction]
fn xi(eta: f64, sigma_g: f64, n_dof: f64) -> PyResult<f64> {
    bias_correction::xi(eta, sigma_g, n_dof).map_err(to_py)
}

/// Bounds on `Σ m² / 2σ²` over `k` volumes at rejection level `p`.
#[pyfunction]
#[pyo3(signature = (k_volumes, n_dof, p = 0.05))]
fn selection_bounds(k_volumes: usize, n_dof: f64, p: f64) -> PyResult<(f64, f64)> {
    background_id::selection_bounds(k_volumes, n_dof, p).map_err(to_py)
}

#[pymodule]
fn dmri_noise_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVolume>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PySlice>()?;
    m.add_class::<PyPhantom>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_field, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_spec, m)?)?;
    m.add_function(wrap_pyfunction!(correct_eta, m)?)?;
    m.add_function(wrap_pyfunction!(ncchi_mean, m)?)?;
    m.add_function(wrap_pyfunction!(xi, m)?)?;
    m.add_function(wrap_pyfunction!(selection_bounds, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

//! Python bindings for the vlclink core: the main domain types plus the
//! geometry, optics, telecom and fitting operations, built as the
//! extension module `vlclink._vlclink`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use vlclink::catalog;
use vlclink::config::RunConfig;
use vlclink::fitting::{
    self, CalibrationSample, ScanContext, ScanFitResult, ScanSample,
};
use vlclink::geometry::{self, RxMode, ScenePoint};
use vlclink::optics::{self, LensKind, LensSpec, PhotodiodeSpec, SourceSpec};
use vlclink::radiometry::{self, CalibrationReference, PatternModel, RadiationPattern};
use vlclink::telecom::{self, CalibrationCurve, ScanAxis};

fn err(e: vlclink::Error) -> PyErr {
    match e {
        vlclink::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<RxMode> {
    match mode.to_ascii_lowercase().as_str() {
        "optimal" => Ok(RxMode::Optimal),
        "flat" => Ok(RxMode::Flat),
        other => Err(PyValueError::new_err(format!(
            "rx_mode must be 'optimal' or 'flat', got '{other}'"
        ))),
    }
}

fn parse_axis(axis: &str) -> PyResult<ScanAxis> {
    match axis.to_ascii_lowercase().as_str() {
        "horizontal" | "h" => Ok(ScanAxis::Horizontal),
        "vertical" | "v" => Ok(ScanAxis::Vertical),
        other => Err(PyValueError::new_err(format!(
            "axis must be 'horizontal' or 'vertical', got '{other}'"
        ))),
    }
}

#[pyclass(name = "LensSpec", skip_from_py_object)]
#[derive(Clone)]
struct PyLensSpec {
    inner: LensSpec,
}

#[pymethods]
impl PyLensSpec {
    #[new]
    #[pyo3(signature = (label, diameter_mm, focal_mm, kind = "aspheric"))]
    fn new(label: &str, diameter_mm: f64, focal_mm: f64, kind: &str) -> PyResult<Self> {
        let kind = match kind.to_ascii_lowercase().as_str() {
            "aspheric" => LensKind::Aspheric,
            "fresnel" => LensKind::Fresnel,
            other => {
                return Err(PyValueError::new_err(format!(
                    "kind must be 'aspheric' or 'fresnel', got '{other}'"
                )))
            }
        };
        Ok(Self {
            inner: LensSpec::new(label, diameter_mm, focal_mm, kind),
        })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn diameter_mm(&self) -> f64 {
        self.inner.diameter_mm
    }

    #[getter]
    fn focal_mm(&self) -> f64 {
        self.inner.focal_mm
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind {
            LensKind::Aspheric => "aspheric",
            LensKind::Fresnel => "fresnel",
        }
    }

    #[getter]
    fn vendor_code(&self) -> String {
        self.inner.vendor_code.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "LensSpec('{}', D={} mm, f={} mm, {})",
            self.inner.label,
            self.inner.diameter_mm,
            self.inner.focal_mm,
            self.kind()
        )
    }
}

#[pyclass(name = "PhotodiodeSpec", skip_from_py_object)]
#[derive(Clone)]
struct PyPhotodiodeSpec {
    inner: PhotodiodeSpec,
}

#[pymethods]
impl PyPhotodiodeSpec {
    #[new]
    #[pyo3(signature = (active_side_mm = 3.6))]
    fn new(active_side_mm: f64) -> Self {
        Self {
            inner: PhotodiodeSpec::new(active_side_mm),
        }
    }

    #[getter]
    fn active_side_mm(&self) -> f64 {
        self.inner.active_side_mm
    }
}

#[pyclass(name = "SourceSpec", skip_from_py_object)]
#[derive(Clone)]
struct PySourceSpec {
    inner: SourceSpec,
}

#[pymethods]
impl PySourceSpec {
    #[new]
    #[pyo3(signature = (disk_diameter_mm = 300.0))]
    fn new(disk_diameter_mm: f64) -> Self {
        Self {
            inner: SourceSpec::new(disk_diameter_mm),
        }
    }

    #[getter]
    fn disk_diameter_mm(&self) -> f64 {
        self.inner.disk_diameter_mm
    }
}

#[pyclass(name = "ScenePoint", skip_from_py_object)]
#[derive(Clone)]
struct PyScenePoint {
    inner: ScenePoint,
}

#[pymethods]
impl PyScenePoint {
    #[new]
    #[pyo3(signature = (distance_m, lateral_m = 0.0, rx_mode = "optimal", tx_height_m = 3.0, rx_height_m = 1.05))]
    fn new(
        distance_m: f64,
        lateral_m: f64,
        rx_mode: &str,
        tx_height_m: f64,
        rx_height_m: f64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: ScenePoint::new(
                tx_height_m,
                rx_height_m,
                distance_m,
                lateral_m,
                parse_mode(rx_mode)?,
            ),
        })
    }

    #[getter]
    fn distance_m(&self) -> f64 {
        self.inner.distance_m
    }

    #[getter]
    fn lateral_m(&self) -> f64 {
        self.inner.lateral_m
    }

    #[getter]
    fn rx_mode(&self) -> &'static str {
        self.inner.rx_mode.label()
    }
}

#[pyclass(name = "AngleSet", skip_from_py_object)]
#[derive(Clone)]
struct PyAngleSet {
    inner: geometry::AngleSet,
}

#[pymethods]
impl PyAngleSet {
    #[getter]
    fn alpha_deg(&self) -> f64 {
        self.inner.alpha_deg
    }

    #[getter]
    fn beta_deg(&self) -> f64 {
        self.inner.beta_deg
    }

    #[getter]
    fn range_m(&self) -> f64 {
        self.inner.range_m
    }

    #[getter]
    fn phi_h_deg(&self) -> f64 {
        self.inner.phi_h_deg
    }

    #[getter]
    fn phi_v_deg(&self) -> f64 {
        self.inner.phi_v_deg
    }

    fn __repr__(&self) -> String {
        format!(
            "AngleSet(alpha={:.4}, beta={:.4}, d={:.4} m, phi_h={:.4}, phi_v={:.4})",
            self.inner.alpha_deg,
            self.inner.beta_deg,
            self.inner.range_m,
            self.inner.phi_h_deg,
            self.inner.phi_v_deg
        )
    }
}

#[pyclass(name = "RadiationPattern", skip_from_py_object)]
#[derive(Clone)]
struct PyRadiationPattern {
    inner: RadiationPattern,
}

#[pymethods]
impl PyRadiationPattern {
    /// Generalized-Lambertian lobe, uncalibrated.
    #[staticmethod]
    #[pyo3(signature = (i0 = 1.0, tilt_deg = 0.0, m_v = 20.0, m_h = 8.0))]
    fn lambertian(i0: f64, tilt_deg: f64, m_v: f64, m_h: f64) -> Self {
        Self {
            inner: RadiationPattern::new(PatternModel::GeneralizedLambertian {
                i0,
                tilt_deg,
                m_v,
                m_h,
            }),
        }
    }

    /// Tabulated map from CSV text (`alpha_deg,beta_deg,intensity`).
    #[staticmethod]
    fn tabulated_from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: RadiationPattern::new(PatternModel::Tabulated(
                radiometry::TabulatedMap::from_csv(text).map_err(err)?,
            )),
        })
    }

    fn with_scale(&self, scale_mv: f64) -> Self {
        Self {
            inner: self.inner.clone().with_scale(scale_mv),
        }
    }

    /// Fix the amplitude scale from one measured grid point.
    fn calibrate(
        &self,
        scene: &PyScenePoint,
        measured_mv: f64,
        lens: &PyLensSpec,
        pd: &PyPhotodiodeSpec,
        src: &PySourceSpec,
    ) -> PyResult<Self> {
        let reference = CalibrationReference {
            scene: scene.inner,
            measured_mv,
        };
        Ok(Self {
            inner: radiometry::calibrate_scale(
                &self.inner,
                &reference,
                &lens.inner,
                &pd.inner,
                &src.inner,
            )
            .map_err(err)?,
        })
    }

    #[getter]
    fn scale_mv(&self) -> Option<f64> {
        self.inner.scale()
    }

    fn intensity(&self, alpha_deg: f64, beta_deg: f64, d_m: f64) -> PyResult<f64> {
        self.inner
            .model
            .intensity(alpha_deg, beta_deg, d_m)
            .map_err(err)
    }
}

#[pyclass(name = "CalibrationCurve", skip_from_py_object)]
#[derive(Clone)]
struct PyCalibrationCurve {
    inner: CalibrationCurve,
}

#[pymethods]
impl PyCalibrationCurve {
    #[new]
    #[pyo3(signature = (t_mv, sigma_mv, n_bits = 48, baud = 115200))]
    fn new(t_mv: f64, sigma_mv: f64, n_bits: u32, baud: u32) -> Self {
        Self {
            inner: CalibrationCurve {
                t_mv,
                sigma_mv,
                n_bits,
                baud,
            },
        }
    }

    #[getter]
    fn t_mv(&self) -> f64 {
        self.inner.t_mv
    }

    #[getter]
    fn sigma_mv(&self) -> f64 {
        self.inner.sigma_mv
    }

    #[getter]
    fn n_bits(&self) -> u32 {
        self.inner.n_bits
    }

    #[getter]
    fn baud(&self) -> u32 {
        self.inner.baud
    }
}

#[pyclass(name = "ScanFit")]
struct PyScanFit {
    inner: ScanFitResult,
}

#[pymethods]
impl PyScanFit {
    #[getter]
    fn scale(&self) -> f64 {
        self.inner.scale
    }

    #[getter]
    fn image_radius_mm(&self) -> f64 {
        self.inner.image_radius_mm
    }

    #[getter]
    fn gauss_height_mv(&self) -> f64 {
        self.inner.gauss.height_mv
    }

    #[getter]
    fn gauss_center_deg(&self) -> f64 {
        self.inner.gauss.center_deg
    }

    #[getter]
    fn gauss_width_deg(&self) -> f64 {
        self.inner.gauss.width_deg
    }

    #[getter]
    fn baseline_mv(&self) -> f64 {
        self.inner.gauss.baseline_mv
    }

    #[getter]
    fn residual_rms_mv(&self) -> f64 {
        self.inner.residual_rms_mv
    }

    #[getter]
    fn covariance(&self) -> Vec<Vec<f64>> {
        self.inner.covariance.iter().map(|r| r.to_vec()).collect()
    }

    #[getter]
    fn phi2_deg(&self) -> f64 {
        self.inner.phi2_deg()
    }

    fn direct_at(&self, phi_deg: f64) -> f64 {
        self.inner.direct_at(phi_deg)
    }

    fn reflection_at(&self, phi_deg: f64) -> f64 {
        self.inner.reflection_at(phi_deg)
    }

    fn total_at(&self, phi_deg: f64) -> f64 {
        self.inner.total_at(phi_deg)
    }
}

/// Shipped condenser catalog.
#[pyfunction]
fn lens_catalog() -> Vec<PyLensSpec> {
    catalog::builtin_lenses()
        .iter()
        .map(|l| PyLensSpec { inner: l.clone() })
        .collect()
}

/// Shipped calibration presets as dictionaries.
#[pyfunction]
fn calibration_presets(py: Python<'_>) -> PyResult<Vec<Py<pyo3::types::PyDict>>> {
    use pyo3::types::PyDict;
    catalog::builtin_presets()
        .iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("label", &p.label)?;
            d.set_item("baud", p.baud)?;
            d.set_item("n_bits", p.n_bits)?;
            d.set_item("t_mv", p.t_mv)?;
            d.set_item("sigma_mv", p.sigma_mv)?;
            d.set_item("lights", p.lights.label())?;
            Ok(d.unbind())
        })
        .collect()
}

#[pyfunction]
fn los_angles(scene: &PyScenePoint) -> PyResult<PyAngleSet> {
    Ok(PyAngleSet {
        inner: geometry::los_angles(&scene.inner).map_err(err)?,
    })
}

#[pyfunction]
fn afov_deg(lens: &PyLensSpec, pd: &PyPhotodiodeSpec) -> f64 {
    optics::afov_deg(&lens.inner, &pd.inner)
}

/// Thin-lens image: returns `(image_distance_mm, radius_mm, (off_h, off_v))`.
#[pyfunction]
fn image_geometry(
    lens: &PyLensSpec,
    src: &PySourceSpec,
    angles: &PyAngleSet,
) -> PyResult<(f64, f64, (f64, f64))> {
    let img = optics::image_geometry(&lens.inner, &src.inner, &angles.inner).map_err(err)?;
    Ok((
        img.image_distance_mm,
        img.radius_mm,
        (img.center_offset_mm[0], img.center_offset_mm[1]),
    ))
}

/// `(phi1_deg, phi2_deg)` bounding the partial-overlap transition.
#[pyfunction]
fn transition_angles_deg(
    lens: &PyLensSpec,
    pd: &PyPhotodiodeSpec,
    radius_mm: f64,
) -> (f64, f64) {
    optics::transition_angles_deg(&lens.inner, &pd.inner, radius_mm)
}

#[pyfunction]
fn overlap_fraction_axis(
    phi_deg: f64,
    lens: &PyLensSpec,
    pd: &PyPhotodiodeSpec,
    radius_mm: f64,
) -> f64 {
    optics::overlap_fraction_axis(phi_deg, &lens.inner, &pd.inner, radius_mm)
}

#[pyfunction]
fn overlap_fraction_2d(
    phi_h_deg: f64,
    phi_v_deg: f64,
    lens: &PyLensSpec,
    pd: &PyPhotodiodeSpec,
    radius_mm: f64,
) -> f64 {
    optics::overlap_fraction_2d(phi_h_deg, phi_v_deg, &lens.inner, &pd.inner, radius_mm)
}

#[pyfunction]
fn received_amplitude(
    angles: &PyAngleSet,
    lens: &PyLensSpec,
    pd: &PyPhotodiodeSpec,
    src: &PySourceSpec,
    pattern: &PyRadiationPattern,
) -> PyResult<f64> {
    optics::received_amplitude(
        &angles.inner,
        &lens.inner,
        &pd.inner,
        &src.inner,
        &pattern.inner,
    )
    .map_err(err)
}

#[pyfunction]
fn bit_error_prob(s_mv: f64, curve: &PyCalibrationCurve) -> f64 {
    telecom::bit_error_prob(s_mv, &curve.inner)
}

/// `(per, ber)` at an amplitude.
#[pyfunction]
fn packet_error_rate(s_mv: f64, curve: &PyCalibrationCurve) -> (f64, f64) {
    let r = telecom::packet_error_rate(s_mv, &curve.inner);
    (r.per, r.ber)
}

#[pyfunction]
fn required_amplitude(per_target: f64, curve: &PyCalibrationCurve) -> f64 {
    telecom::required_amplitude(per_target, &curve.inner)
}

/// Effective field of view. Returns the full width in degrees, 0.0 when
/// the threshold is already missed on axis, or None when there is no
/// signal at all.
#[pyfunction]
#[pyo3(signature = (axis, lens, pd, src, pattern, curve, scene, threshold = 1e-3))]
#[allow(clippy::too_many_arguments)]
fn efov_width_deg(
    axis: &str,
    lens: &PyLensSpec,
    pd: &PyPhotodiodeSpec,
    src: &PySourceSpec,
    pattern: &PyRadiationPattern,
    curve: &PyCalibrationCurve,
    scene: &PyScenePoint,
    threshold: f64,
) -> PyResult<Option<f64>> {
    let result = telecom::efov(
        parse_axis(axis)?,
        &lens.inner,
        &pd.inner,
        &src.inner,
        &pattern.inner,
        &curve.inner,
        &scene.inner,
        threshold,
    )
    .map_err(err)?;
    Ok(result.width_deg())
}

/// Weighted (T, sigma) fit of `(amplitude_mV, amp_err_mV, per, per_err)`
/// samples. Returns a dict with the parameters, standard deviations,
/// covariance and residual.
#[pyfunction]
fn fit_calibration(
    py: Python<'_>,
    samples: Vec<(f64, f64, f64, f64)>,
    n_bits: u32,
) -> PyResult<Py<pyo3::types::PyDict>> {
    let samples: Vec<CalibrationSample> = samples
        .iter()
        .map(|(a, ae, p, pe)| CalibrationSample {
            amplitude_mv: *a,
            amp_err_mv: *ae,
            per: *p,
            per_err: *pe,
        })
        .collect();
    let fit = fitting::fit_calibration(&samples, n_bits).map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("t_mv", fit.t_mv)?;
    d.set_item("sigma_mv", fit.sigma_mv)?;
    d.set_item("std_devs", fit.std_devs())?;
    d.set_item("covariance", fit.covariance)?;
    d.set_item("residual_rms", fit.residual_rms)?;
    d.set_item("iterations", fit.iterations)?;
    Ok(d.unbind())
}

/// Combined direct + Gaussian fit of `(phi_deg, amplitude_mV, amp_err_mV)`
/// scan samples.
#[pyfunction]
fn fit_angular_scan(
    samples: Vec<(f64, f64, f64)>,
    lens: &PyLensSpec,
    pd: &PyPhotodiodeSpec,
    src: &PySourceSpec,
    pattern: &PyRadiationPattern,
    scene: &PyScenePoint,
) -> PyResult<PyScanFit> {
    let samples: Vec<ScanSample> = samples
        .iter()
        .map(|(phi, a, ae)| ScanSample {
            phi_deg: *phi,
            amplitude_mv: *a,
            amp_err_mv: *ae,
        })
        .collect();
    let ctx = ScanContext {
        lens: &lens.inner,
        pd: &pd.inner,
        src: &src.inner,
        pattern: &pattern.inner,
        scene: &scene.inner,
    };
    Ok(PyScanFit {
        inner: fitting::fit_angular_scan(&samples, &ctx).map_err(err)?,
    })
}

/// Run the grid sweep with the default configuration (or a JSON config
/// string) and return the CSV table.
#[pyfunction]
#[pyo3(signature = (config_json = None))]
fn sweep_table(config_json: Option<&str>) -> PyResult<String> {
    let config: RunConfig = match config_json {
        Some(text) => serde_json::from_str(text)
            .map_err(|e| PyValueError::new_err(format!("config: {e}")))?,
        None => RunConfig::default(),
    };
    vlclink::cli::sweep_csv(&config).map_err(err)
}

/// Run the EFOV table with the default configuration (or a JSON config
/// string) and return the CSV table.
#[pyfunction]
#[pyo3(signature = (config_json = None))]
fn efov_table(config_json: Option<&str>) -> PyResult<String> {
    let config: RunConfig = match config_json {
        Some(text) => serde_json::from_str(text)
            .map_err(|e| PyValueError::new_err(format!("config: {e}")))?,
        None => RunConfig::default(),
    };
    vlclink::cli::efov_csv(&config).map_err(err)
}

#[pymodule]
#[pyo3(name = "_vlclink")]
fn vlclink_ext(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLensSpec>()?;
    m.add_class::<PyPhotodiodeSpec>()?;
    m.add_class::<PySourceSpec>()?;
    m.add_class::<PyScenePoint>()?;
    m.add_class::<PyAngleSet>()?;
    m.add_class::<PyRadiationPattern>()?;
    m.add_class::<PyCalibrationCurve>()?;
    m.add_class::<PyScanFit>()?;
    m.add_function(wrap_pyfunction!(lens_catalog, m)?)?;
    m.add_function(wrap_pyfunction!(calibration_presets, m)?)?;
    m.add_function(wrap_pyfunction!(los_angles, m)?)?;
    m.add_function(wrap_pyfunction!(afov_deg, m)?)?;
    m.add_function(wrap_pyfunction!(image_geometry, m)?)?;
    m.add_function(wrap_pyfunction!(transition_angles_deg, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_fraction_axis, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_fraction_2d, m)?)?;
    m.add_function(wrap_pyfunction!(received_amplitude, m)?)?;
    m.add_function(wrap_pyfunction!(bit_error_prob, m)?)?;
    m.add_function(wrap_pyfunction!(packet_error_rate, m)?)?;
    m.add_function(wrap_pyfunction!(required_amplitude, m)?)?;
    m.add_function(wrap_pyfunction!(efov_width_deg, m)?)?;
    m.add_function(wrap_pyfunction!(fit_calibration, m)?)?;
    m.add_function(wrap_pyfunction!(fit_angular_scan, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_table, m)?)?;
    m.add_function(wrap_pyfunction!(efov_table, m)?)?;
    m.add("__version__", vlclink::VERSION)?;
    Ok(())
}

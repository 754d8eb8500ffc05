//! Python bindings: images, the five features, SSIM, correlation measures,
//! the linear SVR model and the repeated train/test protocol.

use std::path::{Path, PathBuf};

use ceiq::eval::{self, LogisticKind};
use ceiq::features::{self, FeatureConfig, FEATURE_NAMES};
use ceiq::imageops::{self, DecodedImage};
use ceiq::ssim::SsimParams;
use ceiq::svr::{self, SvrParams};
use ceiq::{CeiqError, DatasetManifest, FeatureDataset, FeatureVector, GrayImage, Histogram, RgbImage, SplitProtocol, TrainingSet};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: CeiqError) -> PyErr {
    match e {
        CeiqError::InvalidArgument(_) | CeiqError::Parse { .. } => PyValueError::new_err(e.to_string()),
        CeiqError::Degenerate(_) | CeiqError::NotConverged { .. } => PyArithmeticError::new_err(e.to_string()),
        CeiqError::UnsupportedImage { .. } | CeiqError::Decode { .. } | CeiqError::Io { .. } => PyOSError::new_err(e.to_string()),
    }
}

fn feature_config(bins: usize, downsample: bool) -> PyResult<FeatureConfig> {
    if !(1..=256).contains(&bins) {
        return Err(PyValueError::new_err(format!("bins must be in [1, 256], got {bins}")));
    }
    Ok(FeatureConfig {
        bins,
        ssim: SsimParams {
            auto_downsample: downsample,
            ..SsimParams::default()
        },
    })
}

fn logistic_kind(parameters: u8) -> PyResult<LogisticKind> {
    match parameters {
        5 => Ok(LogisticKind::FiveParameter),
        4 => Ok(LogisticKind::FourParameter),
        n => Err(PyValueError::new_err(format!("logistic must have 4 or 5 parameters, got {n}"))),
    }
}

/// An 8-bit grayscale or RGB image.
#[pyclass(module = "ceiq", name = "Image", frozen)]
struct PyImage(DecodedImage);

#[pymethods]
impl PyImage {
    /// Decodes an image file (8-bit gray or RGB; alpha is dropped).
    #[staticmethod]
    fn load(py: Python<'_>, path: PathBuf) -> PyResult<Self> {
        py.detach(|| imageops::load_image(&path)).map(PyImage).map_err(to_py)
    }

    /// Grayscale image from row-major bytes.
    #[staticmethod]
    fn from_gray(width: usize, height: usize, data: Vec<u8>) -> PyResult<Self> {
        GrayImage::new(width, height, data).map(|g| PyImage(DecodedImage::Gray(g))).map_err(to_py)
    }

    /// RGB image from row-major interleaved bytes.
    #[staticmethod]
    fn from_rgb(width: usize, height: usize, data: Vec<u8>) -> PyResult<Self> {
        if !data.len().is_multiple_of(3) {
            return Err(PyValueError::new_err("RGB data length must be a multiple of 3"));
        }
        let pixels = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        RgbImage::new(width, height, pixels).map(|i| PyImage(DecodedImage::Rgb(i))).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn is_rgb(&self) -> bool {
        matches!(self.0, DecodedImage::Rgb(_))
    }

    /// The decolorized image as row-major bytes.
    fn gray(&self) -> Vec<u8> {
        self.0.to_gray().pixels().to_vec()
    }

    /// The histogram-equalized gray image as row-major bytes.
    fn equalized(&self) -> Vec<u8> {
        imageops::equalize(&self.0.to_gray()).pixels().to_vec()
    }

    #[pyo3(signature = (bins = features::DEFAULT_BINS, downsample = true))]
    fn features(&self, py: Python<'_>, bins: usize, downsample: bool) -> PyResult<PyFeatures> {
        let config = feature_config(bins, downsample)?;
        py.detach(|| features::extract_decoded(&self.0, &config)).map(PyFeatures).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let kind = if self.is_rgb() { "rgb" } else { "gray" };
        format!("Image({}x{}, {kind})", self.width(), self.height())
    }
}

/// The five contrast features of one image.
#[pyclass(module = "ceiq", name = "Features", frozen)]
struct PyFeatures(FeatureVector);

#[pymethods]
impl PyFeatures {
    #[new]
    fn new(s_ge: f64, e_g: f64, e_e: f64, e_ge: f64, e_eg: f64) -> Self {
        PyFeatures(FeatureVector::from_array([s_ge, e_g, e_e, e_ge, e_eg]))
    }

    #[classattr]
    fn names() -> Vec<&'static str> {
        FEATURE_NAMES.to_vec()
    }

    #[getter]
    fn s_ge(&self) -> f64 {
        self.0.s_ge
    }

    #[getter]
    fn e_g(&self) -> f64 {
        self.0.e_g
    }

    #[getter]
    fn e_e(&self) -> f64 {
        self.0.e_e
    }

    #[getter]
    fn e_ge(&self) -> f64 {
        self.0.e_ge
    }

    #[getter]
    fn e_eg(&self) -> f64 {
        self.0.e_eg
    }

    fn to_list(&self) -> Vec<f64> {
        self.0.to_array().to_vec()
    }

    fn __repr__(&self) -> String {
        let f = &self.0;
        format!("Features(s_ge={}, e_g={}, e_e={}, e_ge={}, e_eg={})", f.s_ge, f.e_g, f.e_e, f.e_ge, f.e_eg)
    }
}

fn feature_vector(obj: &Bound<'_, PyAny>) -> PyResult<FeatureVector> {
    if let Ok(f) = obj.cast::<PyFeatures>() {
        return Ok(f.get().0);
    }
    let v: Vec<f64> = obj.extract()?;
    let arr: [f64; 5] = v
        .try_into()
        .map_err(|v: Vec<f64>| PyValueError::new_err(format!("expected 5 feature values, got {}", v.len())))?;
    Ok(FeatureVector::from_array(arr))
}

/// A trained linear epsilon-SVR quality model.
#[pyclass(module = "ceiq", name = "SvrModel", frozen)]
struct PySvrModel(svr::SvrModel);

#[pymethods]
impl PySvrModel {
    /// Trains on feature vectors (`Features` or 5-element sequences) and
    /// subjective scores.
    #[staticmethod]
    #[pyo3(signature = (features, scores, c = 1.0, epsilon = 0.1, seed = 0))]
    fn train(py: Python<'_>, features: Vec<Bound<'_, PyAny>>, scores: Vec<f64>, c: f64, epsilon: f64, seed: u64) -> PyResult<Self> {
        if features.len() != scores.len() {
            return Err(PyValueError::new_err(format!("{} feature vectors but {} scores", features.len(), scores.len())));
        }
        let samples = features
            .iter()
            .map(feature_vector)
            .zip(scores)
            .map(|(f, q)| f.map(|f| (f, q)))
            .collect::<PyResult<Vec<_>>>()?;
        let params = SvrParams {
            c,
            epsilon,
            seed,
            ..SvrParams::default()
        };
        let ts = TrainingSet::new(samples);
        py.detach(|| svr::train(&ts, &params)).map(PySvrModel).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_string(&text)
    }

    #[staticmethod]
    fn from_string(text: &str) -> PyResult<Self> {
        svr::SvrModel::deserialize(text).map(PySvrModel).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::write(&path, self.0.serialize()).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))
    }

    #[pyo3(name = "to_string")]
    fn serialized(&self) -> String {
        self.0.serialize()
    }

    fn predict(&self, features: &Bound<'_, PyAny>) -> PyResult<f64> {
        self.0.predict(&feature_vector(features)?).map_err(to_py)
    }

    fn predict_many(&self, features: Vec<Bound<'_, PyAny>>) -> PyResult<Vec<f64>> {
        features.iter().map(|f| self.predict(f)).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights.to_vec()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.0.bias
    }

    fn __repr__(&self) -> String {
        format!("SvrModel(C={}, epsilon={})", self.0.c, self.0.epsilon)
    }
}

/// Mean SSIM between two images of equal size, compared in grayscale.
#[pyfunction]
#[pyo3(signature = (a, b, downsample = true))]
fn ssim(py: Python<'_>, a: &PyImage, b: &PyImage, downsample: bool) -> PyResult<f64> {
    let params = SsimParams {
        auto_downsample: downsample,
        ..SsimParams::default()
    };
    py.detach(|| ceiq::ssim::ssim(&a.0.to_gray(), &b.0.to_gray(), &params))
        .map(|r| r.mean_ssim)
        .map_err(to_py)
}

/// Entropy in bits of a histogram given as bin counts.
#[pyfunction]
fn entropy(counts: Vec<u64>) -> PyResult<f64> {
    features::entropy(&Histogram::from_counts(counts).map_err(to_py)?).map_err(to_py)
}

/// Cross entropy in bits of histogram `q` relative to `p`.
#[pyfunction]
fn cross_entropy(p: Vec<u64>, q: Vec<u64>) -> PyResult<f64> {
    let p = Histogram::from_counts(p).map_err(to_py)?;
    let q = Histogram::from_counts(q).map_err(to_py)?;
    features::cross_entropy(&p, &q).map_err(to_py)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    eval::pearson(&x, &y).map_err(to_py)
}

#[pyfunction]
fn srocc(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    eval::srocc(&x, &y).map_err(to_py)
}

#[pyfunction]
fn krocc(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    eval::krocc(&x, &y).map_err(to_py)
}

/// SROCC, KROCC and PLCC (after a logistic fit) of predictions against
/// subjective scores, with the fitted logistic parameters.
#[pyfunction]
#[pyo3(signature = (predicted, subjective, logistic = 5))]
fn correlations<'py>(py: Python<'py>, predicted: Vec<f64>, subjective: Vec<f64>, logistic: u8) -> PyResult<Bound<'py, PyDict>> {
    let kind = logistic_kind(logistic)?;
    let (c, params) = py.detach(|| eval::correlations(&predicted, &subjective, kind)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("srocc", c.srocc)?;
    d.set_item("plcc", c.plcc)?;
    d.set_item("krocc", c.krocc)?;
    d.set_item("logistic_params", params)?;
    Ok(d)
}

fn load_dataset(path: &Path, config: &FeatureConfig) -> ceiq::Result<FeatureDataset> {
    let manifest = DatasetManifest::load(path)?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let features = manifest
        .entries
        .iter()
        .map(|e| features::extract_decoded(&imageops::load_image(dir.join(&e.image_path))?, config))
        .collect::<ceiq::Result<Vec<_>>>()?;
    FeatureDataset::new(manifest, features)
}

/// Repeated reference-disjoint train/test evaluation of a manifest. Image
/// paths are resolved relative to the manifest's directory.
#[pyfunction]
#[pyo3(signature = (manifest, repetitions = 1000, fraction = 0.8, seed = 0, logistic = 5, c = 1.0, epsilon = 0.1, bins = features::DEFAULT_BINS, downsample = true))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    repetitions: usize,
    fraction: f64,
    seed: u64,
    logistic: u8,
    c: f64,
    epsilon: f64,
    bins: usize,
    downsample: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let config = feature_config(bins, downsample)?;
    let protocol = SplitProtocol {
        train_fraction: fraction,
        repetitions,
        base_seed: seed,
        logistic: logistic_kind(logistic)?,
    };
    let params = SvrParams {
        c,
        epsilon,
        ..SvrParams::default()
    };
    let report = py
        .detach(|| load_dataset(&manifest, &config).and_then(|data| eval::run_protocol(&data, &protocol, &params)))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("dataset", &report.dataset)?;
    d.set_item("images", report.images)?;
    d.set_item("references", report.references)?;
    d.set_item("median_srocc", report.median_srocc)?;
    d.set_item("median_plcc", report.median_plcc)?;
    d.set_item("median_krocc", report.median_krocc)?;
    d.set_item("skipped", report.skipped_count)?;
    d.set_item("srocc", report.per_split.iter().map(|s| s.srocc).collect::<Vec<_>>())?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "ceiq")]
fn ceiq_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyFeatures>()?;
    m.add_class::<PySvrModel>()?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(srocc, m)?)?;
    m.add_function(wrap_pyfunction!(krocc, m)?)?;
    m.add_function(wrap_pyfunction!(correlations, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}

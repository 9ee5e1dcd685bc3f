//! Python bindings: models, training, evaluation and the data pipeline.

use std::path::PathBuf;

use ::debrisnet as core;
use core::data::{self, PrepareConfig, Split};
use core::eval::{self, EvalOptions};
use core::model::sample_forward;
use core::model_io;
use core::train::{self as training, TrainConfig};
use core::{Architecture, Error, Label, ModelParams, Rng, Tensor};
use pyo3::exceptions::{PyIOError, PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Io { .. } | Error::Image { .. } => PyIOError::new_err(msg),
        Error::Shape(_)
        | Error::NonFinite(_)
        | Error::InvalidArgument(_)
        | Error::Config(_)
        | Error::Manifest { .. }
        | Error::ModelFile(_)
        | Error::TensorMismatch { .. }
        | Error::Dataset(_) => PyValueError::new_err(msg),
        Error::Diverged { .. } => PyRuntimeError::new_err(msg),
    }
}

fn arch(image_size: usize, filters: usize) -> Architecture {
    Architecture {
        input_size: image_size,
        filters,
        ..Architecture::default()
    }
}

fn label_of(v: u8) -> PyResult<Label> {
    Label::from_u8(v).ok_or_else(|| PyValueError::new_err(format!("label must be 0 or 1, got {v}")))
}

fn split_of(name: &str) -> PyResult<Split> {
    name.parse().map_err(py_err)
}

/// Network weights for the three-stage convolutional classifier.
#[pyclass(name = "Model", module = "debrisnet", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    params: ModelParams,
}

#[pymethods]
impl PyModel {
    /// He-uniform weights and zero biases drawn from `seed`.
    #[staticmethod]
    #[pyo3(signature = (seed, image_size = 140, filters = 32))]
    fn init(seed: u64, image_size: usize, filters: usize) -> PyResult<Self> {
        let params = ModelParams::init(arch(image_size, filters), &mut Rng::new(seed)).map_err(py_err)?;
        Ok(Self { params })
    }

    #[staticmethod]
    #[pyo3(signature = (image_size = 140, filters = 32))]
    fn zeros(image_size: usize, filters: usize) -> PyResult<Self> {
        let params = ModelParams::zeros(arch(image_size, filters)).map_err(py_err)?;
        Ok(Self { params })
    }

    #[staticmethod]
    #[pyo3(signature = (path, image_size = 140, filters = 32))]
    fn load(path: PathBuf, image_size: usize, filters: usize) -> PyResult<Self> {
        let params = model_io::load_model(&path, arch(image_size, filters)).map_err(py_err)?;
        Ok(Self { params })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        model_io::save_model(&self.params, &path).map_err(py_err)
    }

    /// The model file contents.
    fn to_bytes(&self) -> PyResult<Vec<u8>> {
        model_io::encode_model(&self.params).map_err(py_err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.params.param_count()
    }

    #[getter]
    fn image_size(&self) -> usize {
        self.params.arch().input_size
    }

    fn names(&self) -> Vec<&'static str> {
        self.params.named().map(|(n, _)| n).collect()
    }

    /// `(shape, values)` of one named parameter tensor.
    fn tensor(&self, name: &str) -> PyResult<(Vec<usize>, Vec<f32>)> {
        self.params
            .named()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| (t.shape().to_vec(), t.data().to_vec()))
            .ok_or_else(|| PyKeyError::new_err(name.to_string()))
    }

    /// Probability of litter and the predicted label for an image file.
    fn predict(&self, py: Python<'_>, path: PathBuf) -> PyResult<(f32, String)> {
        let size = self.params.arch().input_size;
        let params = &self.params;
        let p = py
            .detach(|| -> core::Result<f32> {
                let image = data::load_image(&path, size)?;
                Ok(core::layers::sigmoid(sample_forward(params, &image, false)?.0))
            })
            .map_err(py_err)?;
        Ok((p, core::loss::predict_label(p).to_string()))
    }

    /// Probability of litter for a flat `[3, S, S]` list of values in `[0, 1]`.
    fn predict_pixels(&self, pixels: Vec<f32>) -> PyResult<f32> {
        let shape = self.params.arch().image_shape();
        let image = Tensor::from_vec(&shape, pixels).map_err(py_err)?;
        let z = sample_forward(&self.params, &image, false).map_err(py_err)?.0;
        Ok(core::layers::sigmoid(z))
    }

    fn __repr__(&self) -> String {
        let a = self.params.arch();
        format!(
            "Model(image_size={}, filters={}, params={})",
            a.input_size,
            a.filters,
            self.params.param_count()
        )
    }
}

/// Counts with animal as the positive class.
#[pyclass(name = "ConfusionMatrix", module = "debrisnet", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyConfusionMatrix {
    inner: eval::ConfusionMatrix,
}

#[pymethods]
impl PyConfusionMatrix {
    #[new]
    #[pyo3(signature = (tp = 0, fn_ = 0, fp = 0, tn = 0))]
    fn new(tp: usize, fn_: usize, fp: usize, tn: usize) -> Self {
        Self {
            inner: eval::ConfusionMatrix::new(tp, fn_, fp, tn),
        }
    }

    /// Tallies `(actual, predicted)` label pairs given as 0/1.
    #[staticmethod]
    fn from_pairs(pairs: Vec<(u8, u8)>) -> PyResult<Self> {
        let pairs = pairs
            .into_iter()
            .map(|(a, p)| Ok((label_of(a)?, label_of(p)?)))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: eval::ConfusionMatrix::from_pairs(pairs),
        })
    }

    #[getter]
    fn tp(&self) -> usize {
        self.inner.tp
    }

    #[getter(r#fn)]
    fn false_negatives(&self) -> usize {
        self.inner.fn_
    }

    #[getter]
    fn fp(&self) -> usize {
        self.inner.fp
    }

    #[getter]
    fn tn(&self) -> usize {
        self.inner.tn
    }

    #[getter]
    fn total(&self) -> usize {
        self.inner.total()
    }

    /// accuracy, precision, recall and hazard_rate; undefined ratios are None.
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = eval::metrics_from_matrix(&self.inner).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("accuracy", m.accuracy)?;
        d.set_item("precision", m.precision)?;
        d.set_item("recall", m.recall)?;
        d.set_item("hazard_rate", m.hazard_rate)?;
        Ok(d)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!("ConfusionMatrix(tp={}, fn={}, fp={}, tn={})", c.tp, c.fn_, c.fp, c.tn)
    }
}

fn history_dicts<'py>(py: Python<'py>, h: &[core::EpochMetrics]) -> PyResult<Vec<Bound<'py, PyDict>>> {
    h.iter()
        .map(|m| {
            let d = PyDict::new(py);
            d.set_item("epoch", m.epoch)?;
            d.set_item("train_loss", m.train_loss)?;
            d.set_item("train_acc", m.train_acc)?;
            d.set_item("val_loss", m.val_loss)?;
            d.set_item("val_acc", m.val_acc)?;
            Ok(d)
        })
        .collect()
}

/// Trains on a manifest file; returns the model and per-epoch metrics.
#[pyfunction]
#[pyo3(signature = (manifest, epochs = 95, batch_size = 32, lr = 1e-3, seed = 0, image_size = 140, filters = 32))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    image_size: usize,
    filters: usize,
) -> PyResult<(PyModel, Vec<Bound<'py, PyDict>>)> {
    let config = TrainConfig {
        epochs,
        batch_size,
        lr,
        seed,
        image_size,
        filters,
        ..TrainConfig::default()
    };
    let (params, history) = py
        .detach(|| -> core::Result<_> {
            let m = data::read_manifest(&manifest)?;
            training::train(&config, &m)
        })
        .map_err(py_err)?;
    Ok((PyModel { params }, history_dicts(py, &history.epochs)?))
}

/// Confusion matrix of `model` on one split of a manifest file.
#[pyfunction]
#[pyo3(signature = (model, manifest, split = "test", skip_unreadable = false))]
fn evaluate(
    py: Python<'_>,
    model: &PyModel,
    manifest: PathBuf,
    split: &str,
    skip_unreadable: bool,
) -> PyResult<PyConfusionMatrix> {
    let split = split_of(split)?;
    let params = &model.params;
    let report = py
        .detach(|| -> core::Result<_> {
            let m = data::read_manifest(&manifest)?;
            let samples: Vec<_> = m.samples(split).into_iter().cloned().collect();
            eval::evaluate_with(params, &samples, EvalOptions { skip_unreadable })
        })
        .map_err(py_err)?;
    Ok(PyConfusionMatrix { inner: report.matrix })
}

/// Builds a manifest from an image directory and writes it to `out`.
/// Returns counts keyed by `(split, label)`.
#[pyfunction]
#[pyo3(signature = (data_root, out, seed, rotations = 0, crops = 0, val_fraction = 0.1))]
fn prepare<'py>(
    py: Python<'py>,
    data_root: PathBuf,
    out: PathBuf,
    seed: u64,
    rotations: u8,
    crops: usize,
    val_fraction: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = PrepareConfig {
        seed,
        rotations,
        crops,
        val_fraction,
    };
    let manifest = py
        .detach(|| -> core::Result<_> {
            let m = data::prepare(&data_root, &config)?;
            data::write_manifest(&m, &out)?;
            Ok(m)
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    for ((split, label), n) in manifest.counts() {
        d.set_item((split.to_string(), label.as_u8()), n)?;
    }
    Ok(d)
}

/// `(split, label, origin, path)` per record.
#[pyfunction]
fn read_manifest(path: PathBuf) -> PyResult<Vec<(String, u8, String, PathBuf)>> {
    let m = data::read_manifest(&path).map_err(py_err)?;
    Ok(m.records
        .into_iter()
        .map(|r| {
            (
                r.split.to_string(),
                r.sample.label.as_u8(),
                r.sample.origin.to_string(),
                r.sample.path,
            )
        })
        .collect())
}

#[pyfunction]
fn sigmoid(z: f64) -> f64 {
    core::layers::sigmoid(z)
}

/// `(loss, dloss/dz)` for a logit and a 0/1 label.
#[pyfunction]
fn bce_loss_from_logit(z: f64, label: u8) -> PyResult<(f64, f64)> {
    if !z.is_finite() {
        return Err(PyValueError::new_err("logit must be finite"));
    }
    Ok(core::loss::bce_loss_from_logit(z, label_of(label)?))
}

/// Means of `(train_loss, val_loss, train_acc, val_acc)` rows.
#[pyfunction]
fn replicate_means(rows: Vec<(f64, f64, f64, f64)>) -> PyResult<(f64, f64, f64, f64)> {
    let finals: Vec<core::EpochMetrics> = rows
        .into_iter()
        .enumerate()
        .map(|(i, (tl, vl, ta, va))| core::EpochMetrics {
            epoch: i + 1,
            train_loss: tl,
            val_loss: vl,
            train_acc: ta,
            val_acc: va,
        })
        .collect();
    let m = training::replicate_means(&finals).map_err(py_err)?;
    Ok((m.train_loss, m.val_loss, m.train_acc, m.val_acc))
}

#[pymodule]
#[pyo3(name = "debrisnet")]
fn init_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyConfusionMatrix>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(prepare, m)?)?;
    m.add_function(wrap_pyfunction!(read_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(sigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(bce_loss_from_logit, m)?)?;
    m.add_function(wrap_pyfunction!(replicate_means, m)?)?;
    m.add("IMAGE_SIZE", data::IMAGE_SIZE)?;
    Ok(())
}

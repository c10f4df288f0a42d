//! Python bindings: datasets, models, training, retrieval and probes.

use std::path::PathBuf;

use phongru::data::synth::generate;
use phongru::data::{AssembleOptions, GroundedDataset, Split, StripSet, SynthConfig};
use phongru::models::{Checkpoint, Model, ModelDims, ModelType};
use phongru::probing::{self, BoundaryProbeConfig, SpanCounting};
use phongru::retrieval::evaluate_retrieval;
use phongru::training::TrainConfig;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn err(e: phongru::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = phongru::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let d = PyDict::new(py);
            for (k, x) in map {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn report<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(json_err)?)
}

#[pyfunction]
fn steep_sigmoid(z: f64) -> f64 {
    phongru::numerics::steep_sigmoid(z)
}

#[pyfunction]
fn clipped_relu(z: f64) -> f64 {
    phongru::numerics::clipped_relu(z)
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    phongru::numerics::cosine_similarity(&a, &b).map_err(err)
}

#[pyfunction]
fn spearman_rho(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    phongru::numerics::spearman_rho(&x, &y).map_err(err)
}

/// Edit distance between two symbol sequences.
#[pyfunction]
fn levenshtein(a: Vec<String>, b: Vec<String>) -> usize {
    phongru::numerics::levenshtein(&a, &b)
}

#[pyfunction]
#[pyo3(signature = (a, b, counting = "per-span"))]
fn shared_substring_mean_position(a: Vec<String>, b: Vec<String>, counting: &str) -> PyResult<Option<f64>> {
    Ok(probing::shared_substring_mean_position_with(&a, &b, parse(counting)?))
}

/// Phonemes and boundary flags of a transcription given as one list of
/// symbols per word.
#[pyfunction]
#[pyo3(signature = (words, strip = None))]
fn normalize_transcription(words: Vec<Vec<String>>, strip: Option<Vec<String>>) -> PyResult<(Vec<String>, Vec<bool>)> {
    let strip = strip.map_or_else(StripSet::default, StripSet::new);
    phongru::data::normalize_transcription(&words, &strip).map_err(err)
}

/// Generates a synthetic corpus from a JSON config and writes it to `out_dir`.
#[pyfunction]
fn synth(config_json: &str, out_dir: PathBuf) -> PyResult<Vec<String>> {
    let config: SynthConfig = serde_json::from_str(config_json).map_err(json_err)?;
    let corpus = generate(&config).map_err(err)?;
    let mut files = corpus.raw.write_dir(&out_dir).map_err(err)?;
    if let Some(men) = &corpus.men {
        let (pairs, phon) = (out_dir.join(phongru::data::MEN_PAIRS_FILE), out_dir.join(phongru::data::MEN_PHON_FILE));
        phongru::data::write_men(men, &pairs, &phon).map_err(err)?;
        files.extend([pairs, phon]);
    }
    Ok(files.iter().map(|p| p.display().to_string()).collect())
}

#[pyclass(frozen, name = "Dataset")]
struct PyDataset {
    inner: GroundedDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (path, unk_threshold = phongru::data::DEFAULT_UNK_THRESHOLD))]
    fn load(path: PathBuf, unk_threshold: usize) -> PyResult<Self> {
        let opts = AssembleOptions { word_unk_threshold: unk_threshold, ..Default::default() };
        Ok(PyDataset { inner: GroundedDataset::load_dir(&path, &opts).map_err(err)? })
    }

    /// Builds a dataset in memory from a synthetic-corpus JSON config.
    #[staticmethod]
    #[pyo3(signature = (config_json, unk_threshold = phongru::data::DEFAULT_UNK_THRESHOLD))]
    fn synthetic(config_json: &str, unk_threshold: usize) -> PyResult<Self> {
        let config: SynthConfig = serde_json::from_str(config_json).map_err(json_err)?;
        let opts = AssembleOptions { word_unk_threshold: unk_threshold, ..Default::default() };
        let inner = generate(&config).and_then(|c| c.assemble(&opts)).map_err(err)?;
        Ok(PyDataset { inner })
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    #[getter]
    fn phoneme_vocab_size(&self) -> usize {
        self.inner.phoneme_vocab.len()
    }

    #[getter]
    fn word_vocab_size(&self) -> usize {
        self.inner.word_vocab.len()
    }

    fn split_size(&self, split: &str) -> PyResult<usize> {
        Ok(self.inner.split(parse(split)?).len())
    }

    fn utterance<'py>(&self, py: Python<'py>, split: &str, index: usize) -> PyResult<Bound<'py, PyAny>> {
        let utts = self.inner.split(parse(split)?);
        let u = utts
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("index {index} outside a split of {}", utts.len())))?;
        report(py, u)
    }

    fn target(&self, image_id: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.target(image_id).map_err(err)?.to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(train={}, val={}, test={}, feature_dim={})",
            self.inner.split(Split::Train).len(),
            self.inner.split(Split::Val).len(),
            self.inner.split(Split::Test).len(),
            self.inner.feature_dim()
        )
    }
}

type Trace = (Vec<Vec<Vec<f64>>>, Vec<f64>);

#[pyclass(frozen, name = "Model")]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (model_type, dataset, hidden_dim = 64, layers = 3, embedding_dim = 64, seed = 0))]
    fn init(
        model_type: &str,
        dataset: &PyDataset,
        hidden_dim: usize,
        layers: usize,
        embedding_dim: usize,
        seed: u64,
    ) -> PyResult<Self> {
        use rand::SeedableRng;
        let d = &dataset.inner;
        let dims = ModelDims { hidden_dim, layers, embedding_dim };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let inner = Model::init(
            parse(model_type)?,
            &dims,
            d.phoneme_vocab.len(),
            d.word_vocab.len(),
            d.feature_dim(),
            &mut rng,
        )
        .map_err(err)?;
        Ok(PyModel { inner })
    }

    /// Loads a checkpoint, checking it against the dataset's vocabularies.
    #[staticmethod]
    fn load(path: PathBuf, dataset: &PyDataset) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(err)?;
        ck.check_vocabs(&dataset.inner.phoneme_vocab, &dataset.inner.word_vocab).map_err(err)?;
        Ok(PyModel { inner: ck.to_model().map_err(err)? })
    }

    #[pyo3(signature = (path, dataset, unk_threshold = phongru::data::DEFAULT_UNK_THRESHOLD, epoch = 0))]
    fn save(&self, path: PathBuf, dataset: &PyDataset, unk_threshold: usize, epoch: usize) -> PyResult<()> {
        let d = &dataset.inner;
        Checkpoint::new(&self.inner, &d.phoneme_vocab, &d.word_vocab, unk_threshold, epoch).save(&path).map_err(err)
    }

    #[getter]
    fn model_type(&self) -> &'static str {
        self.inner.model_type().as_str()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// Per-layer activations (layer x time x unit) and the prediction.
    fn forward(&self, dataset: &PyDataset, split: &str, index: usize) -> PyResult<Trace> {
        let utts = dataset.inner.split(parse(split)?);
        let u = utts
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("index {index} outside a split of {}", utts.len())))?;
        let t = self.inner.forward(u).map_err(err)?;
        Ok((t.layers, t.prediction))
    }

    fn __repr__(&self) -> String {
        format!("Model({}, {} parameters)", self.inner.model_type(), self.inner.parameter_count())
    }
}

/// Trains a fresh model from a JSON training config. Returns the best model
/// and the per-epoch logs.
#[pyfunction]
#[pyo3(signature = (dataset, model_type, config_json, out_dir = None))]
fn train<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    model_type: &str,
    config_json: &str,
    out_dir: Option<PathBuf>,
) -> PyResult<(PyModel, Bound<'py, PyAny>)> {
    let config: TrainConfig = serde_json::from_str(config_json).map_err(json_err)?;
    let kind: ModelType = parse(model_type)?;
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    }
    let outcome =
        py.detach(|| phongru::training::train(&config, &dataset.inner, kind, out_dir.as_deref())).map_err(err)?;
    let logs = report(py, &outcome.logs)?;
    Ok((PyModel { inner: outcome.best_model }, logs))
}

/// Retrieval accuracy at each cutoff over the images of one split.
#[pyfunction]
#[pyo3(signature = (model, dataset, split = "test", ks = vec![5, 10]))]
fn evaluate(
    py: Python<'_>,
    model: &PyModel,
    dataset: &PyDataset,
    split: &str,
    ks: Vec<usize>,
) -> PyResult<std::collections::BTreeMap<usize, f64>> {
    let d = &dataset.inner;
    let utts = d.split(parse(split)?);
    let r = py.detach(|| evaluate_retrieval(&model.inner, utts, |id| d.target(id), &ks)).map_err(err)?;
    Ok(r.acc)
}

#[pyfunction]
#[pyo3(signature = (model, dataset, layers = None, ngrams = vec![1, 2, 3, 4], seed = 0, train_split = "val", test_split = "test"))]
#[allow(clippy::too_many_arguments)]
fn boundary_probe<'py>(
    py: Python<'py>,
    model: &PyModel,
    dataset: &PyDataset,
    layers: Option<Vec<usize>>,
    ngrams: Vec<usize>,
    seed: u64,
    train_split: &str,
    test_split: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let d = &dataset.inner;
    let (train, test) = (d.split(parse(train_split)?), d.split(parse(test_split)?));
    let mut config = BoundaryProbeConfig { ngram_orders: ngrams, seed, ..Default::default() };
    if let Some(layers) = layers {
        config.layers = layers;
    }
    let r = py.detach(|| probing::boundary_probe_report(&model.inner, train, test, &config)).map_err(err)?;
    report(py, &r)
}

#[pyfunction]
#[pyo3(signature = (model, dataset, split = "val", layers = None, counting = "per-span"))]
fn substring_probe<'py>(
    py: Python<'py>,
    model: &PyModel,
    dataset: &PyDataset,
    split: &str,
    layers: Option<Vec<usize>>,
    counting: &str,
) -> PyResult<Bound<'py, PyAny>> {
    use phongru::models::Representations;
    let counting: SpanCounting = parse(counting)?;
    let layers = layers.unwrap_or_else(|| (1..=model.inner.num_layers()).collect());
    let utts = dataset.inner.split(parse(split)?);
    let r = py.detach(|| probing::substring_report(&model.inner, utts, &layers, counting)).map_err(err)?;
    report(py, &r)
}

#[pymodule]
fn phongru_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(steep_sigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(clipped_relu, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(spearman_rho, m)?)?;
    m.add_function(wrap_pyfunction!(levenshtein, m)?)?;
    m.add_function(wrap_pyfunction!(shared_substring_mean_position, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_transcription, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_probe, m)?)?;
    m.add_function(wrap_pyfunction!(substring_probe, m)?)?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

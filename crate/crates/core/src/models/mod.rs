//! Forward passes of the phoneme-level GRU stack and the two word-level
//! comparison models.

mod checkpoint;
mod gru;

pub use checkpoint::{Checkpoint, CheckpointMeta, TensorRecord, FORMAT_VERSION};
pub(crate) use gru::layer_steps;
pub use gru::{gru_cell, gru_layer, residual_layer, GruLayerParams, GruStep, StepInput};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Utterance;
use crate::error::{invalid, shape_err, Result};
use crate::numerics::Mat;

/// Full-scale defaults.
pub const DEFAULT_HIDDEN_DIM: usize = 1024;
pub const DEFAULT_PHON_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelType {
    PhonGru,
    WordGru,
    WordSum,
}

impl ModelType {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelType::PhonGru => "phon-gru",
            ModelType::WordGru => "word-gru",
            ModelType::WordSum => "word-sum",
        }
    }
}

impl std::str::FromStr for ModelType {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phon-gru" => Ok(ModelType::PhonGru),
            "word-gru" => Ok(ModelType::WordGru),
            "word-sum" => Ok(ModelType::WordSum),
            other => invalid(format!("unknown model type {other:?}")),
        }
    }
}

impl std::fmt::Display for ModelType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Architecture sizes. `layers` only applies to the phoneme model and
/// `embedding_dim` only to the word models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub hidden_dim: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_hidden")]
    pub embedding_dim: usize,
}

fn default_layers() -> usize {
    DEFAULT_PHON_LAYERS
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN_DIM
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims { hidden_dim: DEFAULT_HIDDEN_DIM, layers: DEFAULT_PHON_LAYERS, embedding_dim: DEFAULT_HIDDEN_DIM }
    }
}

/// Hidden activations `[layer][timestep][unit]` plus the predicted image
/// vector. For residual layers the recorded activation is the layer output
/// (GRU state plus input), which is what the next layer and the projection
/// read.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub layers: Vec<Vec<Vec<f64>>>,
    pub prediction: Vec<f64>,
}

impl ActivationTrace {
    /// Activation of layer `k` (0-based) at the last timestep.
    pub fn last(&self, k: usize) -> Option<&[f64]> {
        self.layers.get(k)?.last().map(Vec::as_slice)
    }
}

/// Stacked GRU over fixed one-hot phoneme encodings. Layer 1 maps the
/// one-hot width to `hidden`; layers 2..K are residual.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonGruModel {
    pub vocab_size: usize,
    pub layers: Vec<GruLayerParams>,
    /// `feature_dim x hidden`
    pub projection: Mat,
}

/// Per-layer step caches of a phoneme forward pass.
#[derive(Debug, Clone)]
pub struct PhonForward {
    pub steps: Vec<Vec<GruStep>>,
    /// Layer outputs: states for layer 1, states plus inputs above it.
    pub outputs: Vec<Vec<Vec<f64>>>,
    pub prediction: Vec<f64>,
}

impl PhonGruModel {
    pub fn init<R: Rng + ?Sized>(
        vocab_size: usize,
        hidden: usize,
        layers: usize,
        feature_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if layers == 0 {
            return invalid("phoneme model needs at least one layer");
        }
        let stack = (0..layers)
            .map(|k| GruLayerParams::glorot(if k == 0 { vocab_size } else { hidden }, hidden, rng))
            .collect();
        Ok(PhonGruModel { vocab_size, layers: stack, projection: Mat::glorot(feature_dim, hidden, rng) })
    }

    pub fn zeros(vocab_size: usize, hidden: usize, layers: usize, feature_dim: usize) -> Self {
        PhonGruModel {
            vocab_size,
            layers: (0..layers)
                .map(|k| GruLayerParams::zeros(if k == 0 { vocab_size } else { hidden }, hidden))
                .collect(),
            projection: Mat::zeros(feature_dim, hidden),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return invalid("phoneme model needs at least one layer");
        }
        let d = self.hidden_dim();
        for (k, l) in self.layers.iter().enumerate() {
            l.validate()?;
            let want_in = if k == 0 { self.vocab_size } else { d };
            if l.input_dim() != want_in || l.hidden_dim() != d {
                return shape_err(format!(
                    "layer {} is {}->{}, expected {want_in}->{d}",
                    k + 1,
                    l.input_dim(),
                    l.hidden_dim()
                ));
            }
        }
        Ok(())
    }

    /// Column `p` of the fixed one-hot encoding matrix.
    pub fn encode_phoneme(&self, p: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.vocab_size];
        x[p] = 1.0;
        x
    }

    pub fn forward_detailed(&self, phonemes: &[usize]) -> Result<PhonForward> {
        if phonemes.is_empty() {
            return invalid("empty phoneme sequence");
        }
        if let Some(&bad) = phonemes.iter().find(|&&p| p >= self.vocab_size) {
            return invalid(format!("phoneme index {bad} out of range for vocabulary of {}", self.vocab_size));
        }
        let mut steps = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let layer_steps = if k == 0 {
                layer_steps(layer, phonemes.iter().map(|&p| StepInput::OneHot(p)))
            } else {
                layer_steps(layer, outputs[k - 1].iter().map(|x| StepInput::Dense(x)))
            };
            let out: Vec<Vec<f64>> = if k == 0 {
                layer_steps.iter().map(|s| s.h.clone()).collect()
            } else {
                layer_steps
                    .iter()
                    .zip(&outputs[k - 1])
                    .map(|(s, x)| s.h.iter().zip(x).map(|(a, b)| a + b).collect())
                    .collect()
            };
            steps.push(layer_steps);
            outputs.push(out);
        }
        let top = outputs.last().and_then(|o| o.last()).expect("nonempty");
        let prediction = self.projection.matvec(top);
        Ok(PhonForward { steps, outputs, prediction })
    }

    pub fn forward(&self, u: &Utterance) -> Result<ActivationTrace> {
        let f = self.forward_detailed(&u.phonemes)?;
        Ok(ActivationTrace { layers: f.outputs, prediction: f.prediction })
    }

    fn tensors(&self) -> Vec<&Mat> {
        let mut v: Vec<&Mat> = self.layers.iter().flat_map(|l| l.tensors()).collect();
        v.push(&self.projection);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut v: Vec<&mut Mat> = self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect();
        v.push(&mut self.projection);
        v
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.layers.len())
            .flat_map(|k| GruLayerParams::TENSOR_NAMES.iter().map(move |n| format!("layer{k}.{n}")))
            .collect();
        v.push("projection".into());
        v
    }
}

/// Learnable word embeddings feeding a single GRU layer.
#[derive(Debug, Clone, PartialEq)]
pub struct WordGruModel {
    /// `embedding_dim x vocab`
    pub embeddings: Mat,
    pub layer: GruLayerParams,
    pub projection: Mat,
}

#[derive(Debug, Clone)]
pub struct WordGruForward {
    pub steps: Vec<GruStep>,
    pub prediction: Vec<f64>,
}

impl WordGruModel {
    pub fn init<R: Rng + ?Sized>(
        vocab_size: usize,
        embedding_dim: usize,
        hidden: usize,
        feature_dim: usize,
        rng: &mut R,
    ) -> Self {
        WordGruModel {
            embeddings: Mat::glorot(embedding_dim, vocab_size, rng),
            layer: GruLayerParams::glorot(embedding_dim, hidden, rng),
            projection: Mat::glorot(feature_dim, hidden, rng),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layer.validate()?;
        if self.layer.input_dim() != self.embeddings.rows() || self.projection.cols() != self.layer.hidden_dim() {
            return shape_err("word GRU parts disagree on dimensions");
        }
        Ok(())
    }

    fn check_words(&self, words: &[usize]) -> Result<()> {
        if words.is_empty() {
            return invalid("empty word sequence");
        }
        if let Some(&bad) = words.iter().find(|&&w| w >= self.embeddings.cols()) {
            return invalid(format!("word index {bad} out of range for vocabulary of {}", self.embeddings.cols()));
        }
        Ok(())
    }

    pub fn forward_detailed(&self, words: &[usize]) -> Result<WordGruForward> {
        self.check_words(words)?;
        let inputs: Vec<Vec<f64>> = words.iter().map(|&w| self.embeddings.column(w)).collect();
        let steps = layer_steps(&self.layer, inputs.iter().map(|x| StepInput::Dense(x)));
        let prediction = self.projection.matvec(&steps.last().expect("nonempty").h);
        Ok(WordGruForward { steps, prediction })
    }

    pub fn forward(&self, u: &Utterance) -> Result<ActivationTrace> {
        let f = self.forward_detailed(&u.words)?;
        Ok(ActivationTrace { layers: vec![f.steps.into_iter().map(|s| s.h).collect()], prediction: f.prediction })
    }
}

/// Bag of words: summed embeddings projected to image space.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSumModel {
    pub embeddings: Mat,
    pub projection: Mat,
}

impl WordSumModel {
    pub fn init<R: Rng + ?Sized>(vocab_size: usize, embedding_dim: usize, feature_dim: usize, rng: &mut R) -> Self {
        WordSumModel {
            embeddings: Mat::glorot(embedding_dim, vocab_size, rng),
            projection: Mat::glorot(feature_dim, embedding_dim, rng),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.projection.cols() != self.embeddings.rows() {
            return shape_err("word-sum projection width differs from embedding size");
        }
        Ok(())
    }

    /// Running sums of the embeddings; the last one is the sentence vector.
    pub fn running_sums(&self, words: &[usize]) -> Result<Vec<Vec<f64>>> {
        if words.is_empty() {
            return invalid("empty word sequence");
        }
        let mut acc = vec![0.0; self.embeddings.rows()];
        let mut out = Vec::with_capacity(words.len());
        for &w in words {
            if w >= self.embeddings.cols() {
                return invalid(format!("word index {w} out of range for vocabulary of {}", self.embeddings.cols()));
            }
            self.embeddings.add_column_to(w, &mut acc);
            out.push(acc.clone());
        }
        Ok(out)
    }

    pub fn predict(&self, words: &[usize]) -> Result<Vec<f64>> {
        let sums = self.running_sums(words)?;
        Ok(self.projection.matvec(sums.last().expect("nonempty")))
    }

    pub fn forward(&self, u: &Utterance) -> Result<ActivationTrace> {
        let sums = self.running_sums(&u.words)?;
        let prediction = self.projection.matvec(sums.last().expect("nonempty"));
        Ok(ActivationTrace { layers: vec![sums], prediction })
    }
}

pub fn phon_forward(u: &Utterance, m: &PhonGruModel) -> Result<ActivationTrace> {
    m.forward(u)
}

pub fn word_gru_forward(u: &Utterance, m: &WordGruModel) -> Result<ActivationTrace> {
    m.forward(u)
}

pub fn word_sum_forward(u: &Utterance, m: &WordSumModel) -> Result<Vec<f64>> {
    m.predict(&u.words)
}

/// Any of the three trainable models.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    PhonGru(PhonGruModel),
    WordGru(WordGruModel),
    WordSum(WordSumModel),
}

impl Model {
    pub fn init<R: Rng + ?Sized>(
        kind: ModelType,
        dims: &ModelDims,
        phoneme_vocab: usize,
        word_vocab: usize,
        feature_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.hidden_dim == 0 || dims.embedding_dim == 0 || feature_dim == 0 {
            return invalid("model dimensions must be positive");
        }
        Ok(match kind {
            ModelType::PhonGru => {
                Model::PhonGru(PhonGruModel::init(phoneme_vocab, dims.hidden_dim, dims.layers, feature_dim, rng)?)
            }
            ModelType::WordGru => {
                Model::WordGru(WordGruModel::init(word_vocab, dims.embedding_dim, dims.hidden_dim, feature_dim, rng))
            }
            ModelType::WordSum => Model::WordSum(WordSumModel::init(word_vocab, dims.embedding_dim, feature_dim, rng)),
        })
    }

    pub fn model_type(&self) -> ModelType {
        match self {
            Model::PhonGru(_) => ModelType::PhonGru,
            Model::WordGru(_) => ModelType::WordGru,
            Model::WordSum(_) => ModelType::WordSum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::PhonGru(m) => m.validate(),
            Model::WordGru(m) => m.validate(),
            Model::WordSum(m) => m.validate(),
        }
    }

    pub fn forward(&self, u: &Utterance) -> Result<ActivationTrace> {
        match self {
            Model::PhonGru(m) => m.forward(u),
            Model::WordGru(m) => m.forward(u),
            Model::WordSum(m) => m.forward(u),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Model::PhonGru(m) => m.projection.rows(),
            Model::WordGru(m) => m.projection.rows(),
            Model::WordSum(m) => m.projection.rows(),
        }
    }

    /// Learnable tensors in a fixed order (the one-hot encoding is not one).
    pub fn tensors(&self) -> Vec<&Mat> {
        match self {
            Model::PhonGru(m) => m.tensors(),
            Model::WordGru(m) => {
                let mut v = vec![&m.embeddings];
                v.extend(m.layer.tensors());
                v.push(&m.projection);
                v
            }
            Model::WordSum(m) => vec![&m.embeddings, &m.projection],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        match self {
            Model::PhonGru(m) => m.tensors_mut(),
            Model::WordGru(m) => {
                let mut v = vec![&mut m.embeddings];
                v.extend(m.layer.tensors_mut());
                v.push(&mut m.projection);
                v
            }
            Model::WordSum(m) => vec![&mut m.embeddings, &mut m.projection],
        }
    }

    pub fn tensor_names(&self) -> Vec<String> {
        match self {
            Model::PhonGru(m) => m.tensor_names(),
            Model::WordGru(_) => std::iter::once("embeddings".to_string())
                .chain(GruLayerParams::TENSOR_NAMES.iter().map(|n| format!("layer1.{n}")))
                .chain(std::iter::once("projection".to_string()))
                .collect(),
            Model::WordSum(_) => vec!["embeddings".into(), "projection".into()],
        }
    }

    /// Same architecture with every parameter zero; used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.rows() * t.cols()).sum()
    }
}

/// Maps an utterance to a predicted image vector.
pub trait Predictor {
    fn predict(&self, u: &Utterance) -> Result<Vec<f64>>;
}

/// Exposes per-layer, per-timestep activations to the probes.
pub trait Representations {
    fn num_layers(&self) -> usize;
    fn activations(&self, u: &Utterance) -> Result<Vec<Vec<Vec<f64>>>>;
}

impl Predictor for Model {
    fn predict(&self, u: &Utterance) -> Result<Vec<f64>> {
        match self {
            Model::WordSum(m) => m.predict(&u.words),
            _ => Ok(self.forward(u)?.prediction),
        }
    }
}

impl Representations for Model {
    fn num_layers(&self) -> usize {
        match self {
            Model::PhonGru(m) => m.layers.len(),
            Model::WordGru(_) | Model::WordSum(_) => 1,
        }
    }

    fn activations(&self, u: &Utterance) -> Result<Vec<Vec<Vec<f64>>>> {
        Ok(self.forward(u)?.layers)
    }
}

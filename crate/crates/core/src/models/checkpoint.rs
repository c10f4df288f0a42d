//! Single-document JSON checkpoints with flat row-major parameter arrays.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GruLayerParams, Model, ModelType, PhonGruModel, WordGruModel, WordSumModel};
use crate::data::{read_json, write_json};
use crate::error::{Error, Result};
use crate::numerics::Mat;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointDims {
    pub phoneme_vocab: usize,
    pub word_vocab: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub embedding_dim: usize,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabHashes {
    pub phoneme: String,
    pub word: String,
}

/// Everything but the parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model_type: ModelType,
    pub dims: CheckpointDims,
    pub vocab_hashes: VocabHashes,
    pub unk_threshold: usize,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    #[serde(flatten)]
    pub meta: CheckpointMeta,
    pub parameters: Vec<TensorRecord>,
}

fn dims_of(model: &Model, phoneme_vocab: usize, word_vocab: usize) -> CheckpointDims {
    match model {
        Model::PhonGru(m) => CheckpointDims {
            phoneme_vocab,
            word_vocab,
            hidden_dim: m.hidden_dim(),
            layers: m.layers.len(),
            embedding_dim: 0,
            feature_dim: m.projection.rows(),
        },
        Model::WordGru(m) => CheckpointDims {
            phoneme_vocab,
            word_vocab,
            hidden_dim: m.layer.hidden_dim(),
            layers: 1,
            embedding_dim: m.embeddings.rows(),
            feature_dim: m.projection.rows(),
        },
        Model::WordSum(m) => CheckpointDims {
            phoneme_vocab,
            word_vocab,
            hidden_dim: 0,
            layers: 0,
            embedding_dim: m.embeddings.rows(),
            feature_dim: m.projection.rows(),
        },
    }
}

impl Checkpoint {
    pub fn new(
        model: &Model,
        phoneme_vocab: &crate::data::PhonemeVocab,
        word_vocab: &crate::data::WordVocab,
        unk_threshold: usize,
        epoch: usize,
    ) -> Self {
        let parameters = model
            .tensor_names()
            .into_iter()
            .zip(model.tensors())
            .map(|(name, t)| TensorRecord { name, rows: t.rows(), cols: t.cols(), values: t.as_slice().to_vec() })
            .collect();
        Checkpoint {
            format_version: FORMAT_VERSION,
            meta: CheckpointMeta {
                model_type: model.model_type(),
                dims: dims_of(model, phoneme_vocab.len(), word_vocab.len()),
                vocab_hashes: VocabHashes {
                    phoneme: phoneme_vocab.vocab().fingerprint(),
                    word: word_vocab.vocab().fingerprint(),
                },
                unk_threshold,
                epoch,
            },
            parameters,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        // check the version before the full schema so old files get a clear message
        let raw: serde_json::Value = read_json(path)?;
        match raw.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "{}: format version {v}, this build reads version {FORMAT_VERSION}",
                    path.display()
                )))
            }
            None => return Err(Error::Checkpoint(format!("{}: missing format_version", path.display()))),
        }
        serde_json::from_value(raw).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    /// Rebuilds the model, checking names and shapes.
    pub fn to_model(&self) -> Result<Model> {
        let d = &self.meta.dims;
        let mut model = match self.meta.model_type {
            ModelType::PhonGru => {
                Model::PhonGru(PhonGruModel::zeros(d.phoneme_vocab, d.hidden_dim, d.layers, d.feature_dim))
            }
            ModelType::WordGru => Model::WordGru(WordGruModel {
                embeddings: Mat::zeros(d.embedding_dim, d.word_vocab),
                layer: GruLayerParams::zeros(d.embedding_dim, d.hidden_dim),
                projection: Mat::zeros(d.feature_dim, d.hidden_dim),
            }),
            ModelType::WordSum => Model::WordSum(WordSumModel {
                embeddings: Mat::zeros(d.embedding_dim, d.word_vocab),
                projection: Mat::zeros(d.feature_dim, d.embedding_dim),
            }),
        };
        let names = model.tensor_names();
        if names.len() != self.parameters.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                self.parameters.len()
            )));
        }
        for ((name, slot), rec) in names.iter().zip(model.tensors_mut()).zip(&self.parameters) {
            if *name != rec.name || slot.shape() != (rec.rows, rec.cols) {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?} {}x{} does not match expected {name:?} {:?}",
                    rec.name,
                    rec.rows,
                    rec.cols,
                    slot.shape()
                )));
            }
            *slot = Mat::from_row_major(rec.rows, rec.cols, rec.values.clone())
                .map_err(|e| Error::Checkpoint(format!("tensor {name:?}: {e}")))?;
        }
        model.validate()?;
        Ok(model)
    }

    /// Fails unless the checkpoint was trained with these vocabularies.
    pub fn check_vocabs(
        &self,
        phoneme_vocab: &crate::data::PhonemeVocab,
        word_vocab: &crate::data::WordVocab,
    ) -> Result<()> {
        let h = &self.meta.vocab_hashes;
        if h.phoneme != phoneme_vocab.vocab().fingerprint() || h.word != word_vocab.vocab().fingerprint() {
            return Err(Error::Checkpoint("vocabulary fingerprints differ from the data directory".into()));
        }
        Ok(())
    }
}

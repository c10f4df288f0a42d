//! Optimization: exact gradients, Adam with global-norm clipping, the epoch
//! loop with per-epoch checkpoints, and best-epoch selection.

mod adam;
mod grad;

pub use adam::{adam_step, AdamHyper, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use grad::{accumulate_example, batch_loss, flatten, gradients, loss, loss_grad, param_mut, weighted_gradients};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{write_json, write_jsonl, GroundedDataset, Split, Utterance};
use crate::error::{invalid, Error, Result};
use crate::models::{Checkpoint, Model, ModelDims, ModelType};
use crate::numerics::clip_global_norm;
use crate::retrieval::evaluate_retrieval;

pub const DEFAULT_LEARNING_RATE: f64 = 0.0002;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_CLIP_NORM: f64 = 5.0;
pub const EPOCH_LOG_FILE: &str = "epochs.jsonl";
pub const BEST_FILE: &str = "best.json";

fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}
fn default_batch() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_clip() -> f64 {
    DEFAULT_CLIP_NORM
}
fn default_unk() -> usize {
    crate::data::DEFAULT_UNK_THRESHOLD
}
fn default_eval_k() -> usize {
    5
}
fn default_hidden() -> usize {
    crate::models::DEFAULT_HIDDEN_DIM
}
fn default_layers() -> usize {
    crate::models::DEFAULT_PHON_LAYERS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub seed: u64,
    #[serde(default = "default_unk")]
    pub unk_threshold: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    /// Phoneme model depth.
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_hidden")]
    pub embedding_dim: usize,
    /// Cutoff of the validation accuracy used for best-epoch selection.
    #[serde(default = "default_eval_k")]
    pub eval_k: usize,
}

impl TrainConfig {
    pub fn new(seed: u64, max_epochs: usize, dims: ModelDims) -> Self {
        TrainConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: DEFAULT_BATCH_SIZE,
            clip_norm: DEFAULT_CLIP_NORM,
            max_epochs,
            seed,
            unk_threshold: crate::data::DEFAULT_UNK_THRESHOLD,
            hidden_dim: dims.hidden_dim,
            layers: dims.layers,
            embedding_dim: dims.embedding_dim,
            eval_k: 5,
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims { hidden_dim: self.hidden_dim, layers: self.layers, embedding_dim: self.embedding_dim }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("unk_threshold", self.unk_threshold),
            ("hidden_dim", self.hidden_dim),
            ("layers", self.layers),
            ("embedding_dim", self.embedding_dim),
            ("eval_k", self.eval_k),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation accuracy at `eval_k` (5 by default).
    pub val_acc: f64,
    pub eval_k: usize,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEpoch {
    pub epoch: usize,
    pub val_acc: f64,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub final_model: Model,
    /// Model from the best epoch, or the initial model when no epoch ran.
    pub best_model: Model,
    pub best: Option<BestEpoch>,
}

/// Argmax of validation accuracy, earliest epoch on ties.
pub fn select_best_epoch(logs: &[EpochLog]) -> Result<usize> {
    let mut best: Option<&EpochLog> = None;
    for log in logs {
        if best.is_none_or(|b| log.val_acc > b.val_acc) {
            best = Some(log);
        }
    }
    best.map(|b| b.epoch).ok_or_else(|| Error::InvalidInput("no epochs logged".into()))
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:03}.json")
}

/// Validation mean cosine distance and accuracy at `k` (capped at the number
/// of candidate images).
pub fn validate_model(model: &Model, dataset: &GroundedDataset, split: Split, k: usize) -> Result<(f64, f64)> {
    let utts: &[Utterance] = dataset.split(split);
    let pairs = dataset.pairs(split)?;
    let val_loss = batch_loss(model, &pairs)?;
    let n_images = {
        let mut ids: Vec<&str> = utts.iter().map(|u| u.image_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    let k = k.min(n_images);
    let r = evaluate_retrieval(model, utts, |id| dataset.target(id), &[k])?;
    Ok((val_loss, r.acc_at(k).expect("requested")))
}

/// Trains a fresh model. With `out_dir`, writes `epoch-NNN.json` checkpoints
/// (epoch 0 is the initialization), the epoch log and the best-epoch pointer.
pub fn train(
    config: &TrainConfig,
    dataset: &GroundedDataset,
    model_type: ModelType,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.split(Split::Train).is_empty() || dataset.split(Split::Val).is_empty() {
        return invalid("training needs nonempty train and validation splits");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::init(
        model_type,
        &config.dims(),
        dataset.phoneme_vocab.len(),
        dataset.word_vocab.len(),
        dataset.feature_dim(),
        &mut rng,
    )?;
    let save = |model: &Model, epoch: usize| -> Result<Option<String>> {
        let Some(dir) = out_dir else { return Ok(None) };
        let name = checkpoint_name(epoch);
        Checkpoint::new(model, &dataset.phoneme_vocab, &dataset.word_vocab, config.unk_threshold, epoch)
            .save(&dir.join(&name))?;
        Ok(Some(name))
    };
    save(&model, 0)?;

    let train_pairs = dataset.pairs(Split::Train)?;
    let mut adam = AdamState::new(AdamHyper::new(config.learning_rate), model.tensors());
    let mut logs: Vec<EpochLog> = Vec::with_capacity(config.max_epochs);
    let mut best_model = model.clone();
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&Utterance, &[f64])> = chunk.iter().map(|&i| train_pairs[i]).collect();
            let (loss, mut grad) = gradients(&model, &batch)?;
            total += loss * chunk.len() as f64;
            clip_global_norm(&mut grad.tensors_mut(), config.clip_norm);
            adam.step(&mut model.tensors_mut(), &grad.tensors())?;
        }
        if !model.tensors().iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidInput(format!("parameters diverged in epoch {epoch}")));
        }
        let (val_loss, val_acc) = validate_model(&model, dataset, Split::Val, config.eval_k)?;
        let log = EpochLog {
            epoch,
            train_loss: total / train_pairs.len() as f64,
            val_loss,
            val_acc,
            eval_k: config.eval_k,
            checkpoint: save(&model, epoch)?,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, val loss {:.4}, val acc@{} {:.3}",
            log.train_loss,
            log.val_loss,
            config.eval_k,
            log.val_acc
        );
        if logs.iter().all(|l| log.val_acc > l.val_acc) {
            best_model = model.clone();
        }
        logs.push(log);
        if let Some(dir) = out_dir {
            write_jsonl(&dir.join(EPOCH_LOG_FILE), &logs)?;
        }
    }

    let best = match select_best_epoch(&logs) {
        Ok(epoch) => {
            let l = &logs[epoch - 1];
            Some(BestEpoch { epoch, val_acc: l.val_acc, checkpoint: l.checkpoint.clone() })
        }
        Err(_) => None,
    };
    if let Some(dir) = out_dir {
        write_jsonl(&dir.join(EPOCH_LOG_FILE), &logs)?;
        if let Some(b) = &best {
            write_json(&dir.join(BEST_FILE), b)?;
        }
    }
    Ok(TrainOutcome { logs, final_model: model, best_model, best })
}

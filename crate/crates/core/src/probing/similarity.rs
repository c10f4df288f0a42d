use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{normalize_transcription, MenPair, MenPairSet, PhonemeVocab, StripSet, Utterance, WordVocab};
use crate::error::Result;
use crate::models::{ModelType, Representations};
use crate::numerics::{cosine_or_zero, normalized_edit_distance, spearman_rho};

use super::final_activations;

pub const DEFAULT_MIN_FREQ: usize = 100;

/// Turns a single word into a model input: its phonemes plus EOS for the
/// phoneme model, the word plus word-level EOS for the word models.
#[derive(Debug, Clone)]
pub struct WordEncoder<'a> {
    pub model_type: ModelType,
    pub phoneme_vocab: &'a PhonemeVocab,
    pub word_vocab: &'a WordVocab,
    pub strip: StripSet,
}

impl WordEncoder<'_> {
    /// Stripped transcription without EOS, if nonempty.
    pub fn transcription(&self, phonemes: &[String]) -> Option<Vec<String>> {
        let (mut symbols, _) = normalize_transcription(&[phonemes.to_vec()], &self.strip).ok()?;
        symbols.pop();
        Some(symbols)
    }

    /// `None` when the word cannot be fed to the model: an unknown phoneme
    /// for the phoneme model, an out-of-vocabulary word for the word models.
    pub fn encode(&self, word: &str, phonemes: &[String]) -> Option<Utterance> {
        let (symbols, flags) = normalize_transcription(&[phonemes.to_vec()], &self.strip).ok()?;
        let encoded = self.phoneme_vocab.encode(&symbols).ok();
        let words = vec![self.word_vocab.encode_word(word), self.word_vocab.vocab().eos()];
        let phonemes = match self.model_type {
            ModelType::PhonGru => encoded?,
            ModelType::WordGru | ModelType::WordSum => {
                if !self.word_vocab.contains(word) {
                    return None;
                }
                encoded.unwrap_or_default()
            }
        };
        Some(Utterance {
            id: word.to_string(),
            image_id: String::new(),
            boundary_after: if phonemes.is_empty() { Vec::new() } else { flags },
            phonemes,
            words,
        })
    }
}

/// Per-layer final activations keyed by word.
pub type WordActivations = BTreeMap<String, Vec<Vec<f64>>>;

/// Final-timestep activations of every layer for each distinct encodable
/// word of the pair set, plus the pairs whose two words both encoded.
pub fn encode_pairs<'p, M>(
    model: &M,
    pairs: &'p MenPairSet,
    encoder: &WordEncoder,
) -> Result<(WordActivations, Vec<&'p MenPair>)>
where
    M: Representations + Sync + ?Sized,
{
    let mut words: BTreeMap<&str, &[String]> = BTreeMap::new();
    for p in &pairs.pairs {
        words.insert(&p.word_a, &p.phonemes_a);
        words.insert(&p.word_b, &p.phonemes_b);
    }
    let words: Vec<(&str, &[String])> = words.into_iter().collect();
    let acts = words
        .par_iter()
        .filter_map(|(w, ph)| encoder.encode(w, ph).map(|u| (w.to_string(), u)))
        .map(|(w, u)| Ok((w, final_activations(model, &u)?)))
        .collect::<Result<Vec<_>>>()?;
    let acts: BTreeMap<String, Vec<Vec<f64>>> = acts.into_iter().collect();
    let used = pairs.pairs.iter().filter(|p| acts.contains_key(&p.word_a) && acts.contains_key(&p.word_b)).collect();
    Ok((acts, used))
}

fn layer_cosines(acts: &BTreeMap<String, Vec<Vec<f64>>>, pairs: &[&MenPair], layer: usize) -> Vec<f64> {
    pairs.iter().map(|p| cosine_or_zero(&acts[&p.word_a][layer], &acts[&p.word_b][layer])).collect()
}

/// Spearman correlation, or `None` when it is undefined (fewer than three
/// values or a constant side).
pub fn rho_or_none(x: &[f64], y: &[f64]) -> Option<f64> {
    spearman_rho(x, y).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityLayer {
    pub layer: usize,
    pub rho_all: Option<f64>,
    pub rho_frequent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub model_type: ModelType,
    pub min_freq: usize,
    pub n_pairs: usize,
    pub n_frequent: usize,
    /// Pairs dropped when reading the MEN files.
    pub skipped_untranscribed: usize,
    /// Pairs dropped because a word could not be fed to the model.
    pub skipped_unencodable: usize,
    pub layers: Vec<SimilarityLayer>,
}

/// Spearman correlation between human ratings and per-layer cosine
/// similarity of the final-timestep activations, over all pairs and over
/// pairs whose words both occur at least `min_freq` times in training.
pub fn word_similarity_report<M>(
    model: &M,
    pairs: &MenPairSet,
    encoder: &WordEncoder,
    min_freq: usize,
) -> Result<SimilarityReport>
where
    M: Representations + Sync + ?Sized,
{
    let (acts, used) = encode_pairs(model, pairs, encoder)?;
    let frequent: Vec<&MenPair> = used
        .iter()
        .copied()
        .filter(|p| pairs.is_frequent(&p.word_a, min_freq) && pairs.is_frequent(&p.word_b, min_freq))
        .collect();
    let ratings = |ps: &[&MenPair]| ps.iter().map(|p| p.rating).collect::<Vec<f64>>();
    let layers = (0..model.num_layers())
        .map(|k| SimilarityLayer {
            layer: k + 1,
            rho_all: rho_or_none(&ratings(&used), &layer_cosines(&acts, &used, k)),
            rho_frequent: rho_or_none(&ratings(&frequent), &layer_cosines(&acts, &frequent, k)),
        })
        .collect();
    Ok(SimilarityReport {
        model_type: encoder.model_type,
        min_freq,
        n_pairs: used.len(),
        n_frequent: frequent.len(),
        skipped_untranscribed: pairs.skipped,
        skipped_unencodable: pairs.pairs.len() - used.len(),
        layers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditDistanceLayer {
    pub layer: usize,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditDistanceReport {
    pub model_type: ModelType,
    pub n_pairs: usize,
    pub skipped_untranscribed: usize,
    pub skipped_unencodable: usize,
    pub layers: Vec<EditDistanceLayer>,
    /// Correlation of the human ratings themselves with edit distance.
    pub rating_rho: Option<f64>,
}

/// Spearman correlation between the normalized edit distance of each pair's
/// transcriptions and per-layer cosine similarity.
pub fn edit_distance_report<M>(model: &M, pairs: &MenPairSet, encoder: &WordEncoder) -> Result<EditDistanceReport>
where
    M: Representations + Sync + ?Sized,
{
    let (acts, used) = encode_pairs(model, pairs, encoder)?;
    let mut kept = Vec::new();
    let mut distances = Vec::new();
    for p in used {
        let (Some(a), Some(b)) = (encoder.transcription(&p.phonemes_a), encoder.transcription(&p.phonemes_b)) else {
            continue;
        };
        distances.push(normalized_edit_distance(&a, &b)?);
        kept.push(p);
    }
    let layers = (0..model.num_layers())
        .map(|k| EditDistanceLayer { layer: k + 1, rho: rho_or_none(&distances, &layer_cosines(&acts, &kept, k)) })
        .collect();
    let ratings: Vec<f64> = kept.iter().map(|p| p.rating).collect();
    Ok(EditDistanceReport {
        model_type: encoder.model_type,
        n_pairs: kept.len(),
        skipped_untranscribed: pairs.skipped,
        skipped_unencodable: pairs.pairs.len() - kept.len(),
        layers,
        rating_rho: rho_or_none(&ratings, &distances),
    })
}

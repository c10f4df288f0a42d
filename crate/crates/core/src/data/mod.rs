//! Corpus ingestion, transcription normalization, vocabularies and the
//! grounded dataset the models train on.

mod io;
pub mod synth;
mod vocab;

pub use io::*;
pub use synth::{synth_generate, SynthConfig};
pub use vocab::{PhonemeVocab, Vocab, WordVocab, EOS, UNK};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::ZScoreStats;

/// Stress and pause markers removed from transcriptions by default
/// (IPA and ASCII stress marks, pause and linking symbols).
pub const DEFAULT_STRIP: &[&str] = &["ˈ", "ˌ", "'", ",", "_", "%", "="];

pub const DEFAULT_UNK_THRESHOLD: usize = 10;

/// An encoded caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub image_id: String,
    /// Phoneme indices, EOS last.
    pub phonemes: Vec<usize>,
    /// True iff a word boundary follows the phoneme; false at EOS.
    pub boundary_after: Vec<bool>,
    /// Word indices, word-level EOS last.
    pub words: Vec<usize>,
}

impl Utterance {
    /// Number of phonemes excluding EOS.
    pub fn len_without_eos(&self) -> usize {
        self.phonemes.len().saturating_sub(1)
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary_after.iter().filter(|b| **b).count()
    }
}

/// Characters stripped from each phoneme symbol before flattening.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripSet(Vec<String>);

impl StripSet {
    pub fn new<S: Into<String>>(markers: impl IntoIterator<Item = S>) -> Self {
        StripSet(markers.into_iter().map(Into::into).filter(|m: &String| !m.is_empty()).collect())
    }

    pub fn none() -> Self {
        StripSet(Vec::new())
    }

    fn strip(&self, symbol: &str) -> String {
        self.0.iter().fold(symbol.to_string(), |s, marker| s.replace(marker.as_str(), ""))
    }
}

impl Default for StripSet {
    fn default() -> Self {
        StripSet::new(DEFAULT_STRIP.iter().copied())
    }
}

/// Flattens per-word transcriptions into one phoneme stream with markers
/// removed. Each word-final phoneme is flagged as preceding a boundary, and
/// EOS is appended with a false flag.
pub fn normalize_transcription(
    word_transcriptions: &[Vec<String>],
    strip: &StripSet,
) -> Result<(Vec<String>, Vec<bool>)> {
    if word_transcriptions.is_empty() {
        return invalid("transcription has no words");
    }
    let mut phonemes = Vec::new();
    let mut flags = Vec::new();
    for (w, word) in word_transcriptions.iter().enumerate() {
        let cleaned: Vec<String> = word.iter().map(|s| strip.strip(s)).filter(|s| !s.is_empty()).collect();
        if cleaned.is_empty() {
            return invalid(format!("word {w} is empty after removing markers"));
        }
        if let Some(bad) = cleaned.iter().find(|s| s.as_str() == EOS) {
            return invalid(format!("reserved symbol {bad:?} in transcription"));
        }
        let n = cleaned.len();
        phonemes.extend(cleaned);
        flags.extend((0..n).map(|i| i + 1 == n));
    }
    phonemes.push(EOS.to_string());
    flags.push(false);
    Ok((phonemes, flags))
}

/// Training-set word counts and the two vocabularies derived from them.
pub fn build_vocabs(
    train: &[&CaptionRecord],
    strip: &StripSet,
    word_unk_threshold: usize,
) -> Result<(PhonemeVocab, WordVocab, BTreeMap<String, usize>)> {
    if train.is_empty() {
        return invalid("cannot build vocabularies from an empty training split");
    }
    let mut counts = BTreeMap::new();
    let mut phonemes = Vec::new();
    for rec in train {
        for w in &rec.words {
            *counts.entry(w.clone()).or_insert(0) += 1;
        }
        phonemes.extend(normalize_transcription(&rec.phoneme_words, strip)?.0);
    }
    let pv = PhonemeVocab::build(phonemes.iter().map(String::as_str));
    let wv = WordVocab::build(&counts, word_unk_threshold.max(1));
    Ok((pv, wv, counts))
}

#[derive(Debug, Clone)]
pub struct AssembleOptions {
    pub strip: StripSet,
    pub word_unk_threshold: usize,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions { strip: StripSet::default(), word_unk_threshold: DEFAULT_UNK_THRESHOLD }
    }
}

/// Encoded utterances per split, image targets, and the fitted z-score.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedDataset {
    pub phoneme_vocab: PhonemeVocab,
    pub word_vocab: WordVocab,
    pub word_counts: BTreeMap<String, usize>,
    pub splits: BTreeMap<Split, Vec<Utterance>>,
    /// Raw feature vectors keyed by image id.
    pub features: BTreeMap<String, Vec<f64>>,
    /// Fitted on the distinct training images.
    pub zscore: ZScoreStats,
    targets: BTreeMap<String, Vec<f64>>,
}

impl GroundedDataset {
    pub fn assemble(raw: &RawCorpus, opts: &AssembleOptions) -> Result<Self> {
        let split_of: HashMap<&str, Split> = raw.splits.iter().map(|s| (s.id.as_str(), s.split)).collect();
        let features: BTreeMap<String, Vec<f64>> =
            raw.features.iter().map(|f| (f.image_id.clone(), f.vector.clone())).collect();
        if features.values().flatten().any(|v| !v.is_finite()) {
            return invalid("non-finite feature value");
        }

        let mut by_split: BTreeMap<Split, Vec<&CaptionRecord>> = BTreeMap::new();
        for rec in &raw.captions {
            let split = *split_of
                .get(rec.id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("caption {:?} has no split assignment", rec.id)))?;
            if !features.contains_key(&rec.image_id) {
                return invalid(format!("caption {:?} references missing image id {:?}", rec.id, rec.image_id));
            }
            if rec.words.len() != rec.phoneme_words.len() {
                return invalid(format!(
                    "caption {:?} has {} words but {} transcribed words",
                    rec.id,
                    rec.words.len(),
                    rec.phoneme_words.len()
                ));
            }
            by_split.entry(split).or_default().push(rec);
        }

        let train_recs = by_split.get(&Split::Train).map(Vec::as_slice).unwrap_or(&[]);
        let (phoneme_vocab, word_vocab, word_counts) = build_vocabs(train_recs, &opts.strip, opts.word_unk_threshold)?;

        let mut splits = BTreeMap::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            let recs = by_split.get(&split).map(Vec::as_slice).unwrap_or(&[]);
            let utts = recs
                .iter()
                .map(|rec| encode_caption(rec, &opts.strip, &phoneme_vocab, &word_vocab))
                .collect::<Result<Vec<_>>>()?;
            splits.insert(split, utts);
        }

        let mut train_images: Vec<&str> = splits[&Split::Train].iter().map(|u| u.image_id.as_str()).collect();
        train_images.sort_unstable();
        train_images.dedup();
        let rows: Vec<&[f64]> = train_images.iter().map(|id| features[*id].as_slice()).collect();
        let zscore = ZScoreStats::fit(&rows)?;
        let targets = features.iter().map(|(id, v)| Ok((id.clone(), zscore.apply(v)?))).collect::<Result<_>>()?;

        Ok(GroundedDataset { phoneme_vocab, word_vocab, word_counts, splits, features, zscore, targets })
    }

    pub fn load_dir(dir: &std::path::Path, opts: &AssembleOptions) -> Result<Self> {
        GroundedDataset::assemble(&RawCorpus::load_dir(dir)?, opts)
    }

    pub fn split(&self, split: Split) -> &[Utterance] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    /// z-scored feature vector for an image.
    pub fn target(&self, image_id: &str) -> Result<&[f64]> {
        self.targets
            .get(image_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidInput(format!("unknown image id {image_id:?}")))
    }

    pub fn feature_dim(&self) -> usize {
        self.zscore.dim()
    }

    /// (utterance, target) pairs of a split.
    pub fn pairs(&self, split: Split) -> Result<Vec<(&Utterance, &[f64])>> {
        self.split(split).iter().map(|u| Ok((u, self.target(&u.image_id)?))).collect()
    }
}

fn encode_caption(rec: &CaptionRecord, strip: &StripSet, pv: &PhonemeVocab, wv: &WordVocab) -> Result<Utterance> {
    let (symbols, boundary_after) = normalize_transcription(&rec.phoneme_words, strip)
        .map_err(|e| Error::InvalidInput(format!("caption {:?}: {e}", rec.id)))?;
    let phonemes = pv.encode(&symbols).map_err(|e| Error::InvalidInput(format!("caption {:?}: {e}", rec.id)))?;
    let mut words = wv.encode(&rec.words);
    words.push(0);
    Ok(Utterance { id: rec.id.clone(), image_id: rec.image_id.clone(), phonemes, boundary_after, words })
}

//! Seeded synthetic grounded corpus: an artificial lexicon whose words each
//! name a concept with a prototype feature vector; an image is the mean of
//! its caption's prototypes plus Gaussian noise.

use std::collections::{BTreeMap, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    AssembleOptions, CaptionRecord, FeatureRecord, GroundedDataset, MenPair, MenPairSet, RawCorpus, Split, SplitRecord,
};
use crate::error::{Error, Result};
use crate::numerics::cosine_similarity;

const SYMBOLS: &[&str] = &[
    "p", "b", "t", "d", "k", "g", "m", "n", "s", "z", "f", "v", "l", "r", "a", "e", "i", "o", "u", "ə", "ɪ", "ʊ", "æ",
    "ʃ", "θ", "ŋ", "w", "j", "h", "ɔ",
];

fn default_inventory() -> usize {
    12
}

fn default_caption_len() -> [usize; 2] {
    [3, 8]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_words: usize,
    /// Inclusive range of word lengths in phonemes.
    pub n_phonemes_per_word: [usize; 2],
    pub n_concepts: usize,
    pub feature_dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default = "default_inventory")]
    pub phoneme_inventory: usize,
    /// Inclusive range of caption lengths in words.
    #[serde(default = "default_caption_len")]
    pub words_per_caption: [usize; 2],
    /// Number of MEN-style word pairs to emit (0 = none).
    #[serde(default)]
    pub men_pairs: usize,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_words", self.n_words),
            ("n_concepts", self.n_concepts),
            ("feature_dim", self.feature_dim),
            ("n_train", self.n_train),
            ("n_val", self.n_val),
            ("n_test", self.n_test),
            ("phoneme_inventory", self.phoneme_inventory),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, [lo, hi]) in
            [("n_phonemes_per_word", self.n_phonemes_per_word), ("words_per_caption", self.words_per_caption)]
        {
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("{name} must be a range [min, max] with 1 <= min <= max")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        let [lo, hi] = self.n_phonemes_per_word;
        let capacity: f64 = (lo..=hi).map(|l| (self.phoneme_inventory as f64).powi(l as i32)).sum();
        if capacity < self.n_words as f64 {
            return Err(Error::Config(format!(
                "cannot form {} distinct words from {} phonemes",
                self.n_words, self.phoneme_inventory
            )));
        }
        if self.men_pairs > 0 && self.n_words < 2 {
            return Err(Error::Config("men_pairs needs at least 2 words".into()));
        }
        Ok(())
    }
}

/// A lexicon entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconWord {
    pub word: String,
    pub phonemes: Vec<String>,
    pub concept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub raw: RawCorpus,
    pub lexicon: Vec<LexiconWord>,
    pub prototypes: Vec<Vec<f64>>,
    pub men: Option<MenPairSet>,
}

impl SynthCorpus {
    pub fn assemble(&self, opts: &AssembleOptions) -> Result<GroundedDataset> {
        GroundedDataset::assemble(&self.raw, opts)
    }
}

fn phoneme_symbol(i: usize) -> String {
    SYMBOLS.get(i).map_or_else(|| format!("p{i}"), |s| s.to_string())
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let inventory: Vec<String> = (0..config.phoneme_inventory).map(phoneme_symbol).collect();

    let mut seen = HashSet::new();
    let mut lexicon = Vec::with_capacity(config.n_words);
    let [lo, hi] = config.n_phonemes_per_word;
    while lexicon.len() < config.n_words {
        let len = rng.random_range(lo..=hi);
        let form: Vec<String> = (0..len).map(|_| inventory.choose(&mut rng).expect("nonempty").clone()).collect();
        if seen.insert(form.clone()) {
            let i = lexicon.len();
            lexicon.push(LexiconWord { word: format!("w{i:03}"), phonemes: form, concept: i % config.n_concepts });
        }
    }

    let std_normal = Normal::new(0.0, 1.0).expect("valid");
    let prototypes: Vec<Vec<f64>> = (0..config.n_concepts)
        .map(|_| (0..config.feature_dim).map(|_| std_normal.sample(&mut rng)).collect())
        .collect();

    let total = config.n_train + config.n_val + config.n_test;
    let [wlo, whi] = config.words_per_caption;
    let mut raw = RawCorpus::default();
    for n in 0..total {
        let k = rng.random_range(wlo..=whi);
        let picks: Vec<&LexiconWord> = (0..k).map(|_| lexicon.choose(&mut rng).expect("nonempty")).collect();
        let mut vector = vec![0.0; config.feature_dim];
        for w in &picks {
            for (v, p) in vector.iter_mut().zip(&prototypes[w.concept]) {
                *v += p / k as f64;
            }
        }
        for v in vector.iter_mut() {
            *v += config.noise_sigma * std_normal.sample(&mut rng);
        }
        let id = format!("cap{n:06}");
        let image_id = format!("img{n:06}");
        let split = if n < config.n_train {
            Split::Train
        } else if n < config.n_train + config.n_val {
            Split::Val
        } else {
            Split::Test
        };
        raw.captions.push(CaptionRecord {
            id: id.clone(),
            image_id: image_id.clone(),
            words: picks.iter().map(|w| w.word.clone()).collect(),
            phoneme_words: picks.iter().map(|w| w.phonemes.clone()).collect(),
        });
        raw.features.push(FeatureRecord { image_id, vector });
        raw.splits.push(SplitRecord { id, split });
    }

    let men = (config.men_pairs > 0).then(|| men_pairs(config, &lexicon, &prototypes, &raw, &mut rng));
    Ok(SynthCorpus { raw, lexicon, prototypes, men })
}

/// Word pairs rated by prototype cosine mapped onto a 0..50 scale.
fn men_pairs(
    config: &SynthConfig,
    lexicon: &[LexiconWord],
    prototypes: &[Vec<f64>],
    raw: &RawCorpus,
    rng: &mut ChaCha8Rng,
) -> MenPairSet {
    let train_ids: HashSet<&str> =
        raw.splits.iter().filter(|s| s.split == Split::Train).map(|s| s.id.as_str()).collect();
    let mut train_counts: BTreeMap<String, usize> = lexicon.iter().map(|w| (w.word.clone(), 0)).collect();
    for c in raw.captions.iter().filter(|c| train_ids.contains(c.id.as_str())) {
        for w in &c.words {
            *train_counts.get_mut(w).expect("lexicon word") += 1;
        }
    }
    let pairs = (0..config.men_pairs)
        .map(|_| {
            let a = rng.random_range(0..lexicon.len());
            let mut b = rng.random_range(0..lexicon.len() - 1);
            if b >= a {
                b += 1;
            }
            let (wa, wb) = (&lexicon[a], &lexicon[b]);
            let cos = cosine_similarity(&prototypes[wa.concept], &prototypes[wb.concept]).unwrap_or(0.0);
            MenPair {
                word_a: wa.word.clone(),
                word_b: wb.word.clone(),
                rating: 25.0 * (cos + 1.0),
                phonemes_a: wa.phonemes.clone(),
                phonemes_b: wb.phonemes.clone(),
            }
        })
        .collect();
    MenPairSet { pairs, train_counts, skipped: 0 }
}

/// Generates and assembles a dataset in one step.
pub fn synth_generate(config: &SynthConfig, opts: &AssembleOptions) -> Result<GroundedDataset> {
    generate(config)?.assemble(opts)
}

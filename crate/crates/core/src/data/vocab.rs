use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// Symbol/index bijection. Index 0 is always [`EOS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    symbols: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    fn from_symbols(symbols: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return invalid(format!("duplicate vocabulary symbol {s:?}"));
            }
        }
        Ok(Vocab { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn get(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, idx: usize) -> Option<&str> {
        self.symbols.get(idx).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn eos(&self) -> usize {
        0
    }

    /// Hex SHA-256 over the newline-joined symbol list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.symbols {
            h.update(s.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn decode(&self, idxs: &[usize]) -> Option<Vec<&str>> {
        idxs.iter().map(|&i| self.symbol(i)).collect()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = crate::Error;

    fn try_from(symbols: Vec<String>) -> Result<Self> {
        Vocab::from_symbols(symbols)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.symbols
    }
}

/// Phoneme inventory observed in training data plus [`EOS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhonemeVocab(Vocab);

impl PhonemeVocab {
    /// Symbols are sorted so the vocabulary does not depend on corpus order.
    pub fn build<'a>(phonemes: impl IntoIterator<Item = &'a str>) -> Self {
        let mut seen: Vec<&str> = phonemes.into_iter().filter(|p| *p != EOS).collect();
        seen.sort_unstable();
        seen.dedup();
        let mut symbols = vec![EOS.to_string()];
        symbols.extend(seen.into_iter().map(str::to_string));
        PhonemeVocab(Vocab::from_symbols(symbols).expect("deduplicated"))
    }

    pub fn encode(&self, symbols: &[String]) -> Result<Vec<usize>> {
        symbols
            .iter()
            .map(|s| self.0.get(s).ok_or_else(|| crate::Error::InvalidInput(format!("unknown phoneme {s:?}"))))
            .collect()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Word vocabulary: [`EOS`] at 0, [`UNK`] at 1, then every word whose
/// training frequency reaches the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WordVocab(Vocab);

impl WordVocab {
    pub const UNK_INDEX: usize = 1;

    pub fn build(counts: &BTreeMap<String, usize>, threshold: usize) -> Self {
        let mut symbols = vec![EOS.to_string(), UNK.to_string()];
        symbols.extend(
            counts
                .iter()
                .filter(|(w, &c)| c >= threshold && w.as_str() != EOS && w.as_str() != UNK)
                .map(|(w, _)| w.clone()),
        );
        WordVocab(Vocab::from_symbols(symbols).expect("BTreeMap keys are unique"))
    }

    pub fn encode_word(&self, word: &str) -> usize {
        self.0.get(word).unwrap_or(Self::UNK_INDEX)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.get(word).is_some_and(|i| i > Self::UNK_INDEX)
    }

    pub fn encode(&self, words: &[String]) -> Vec<usize> {
        words.iter().map(|w| self.encode_word(w)).collect()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

//! JSON-lines corpus, feature and split files, plus the MEN pair files.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const FEATURES_FILE: &str = "features.jsonl";
pub const SPLITS_FILE: &str = "splits.jsonl";
pub const MEN_PAIRS_FILE: &str = "men.txt";
pub const MEN_PHON_FILE: &str = "men_phon.jsonl";

/// One caption as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRecord {
    pub id: String,
    pub image_id: String,
    pub words: Vec<String>,
    pub phoneme_words: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub image_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRecord {
    pub id: String,
    pub split: Split,
}

/// Transcription and training-set frequency for one MEN word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MenWordRecord {
    pub word: String,
    pub phonemes: Vec<String>,
    pub train_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenPair {
    pub word_a: String,
    pub word_b: String,
    pub rating: f64,
    pub phonemes_a: Vec<String>,
    pub phonemes_b: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MenPairSet {
    pub pairs: Vec<MenPair>,
    pub train_counts: BTreeMap<String, usize>,
    /// Pairs dropped because a word had no transcription.
    pub skipped: usize,
}

impl MenPairSet {
    pub fn is_frequent(&self, word: &str, min_freq: usize) -> bool {
        self.train_counts.get(word).copied().unwrap_or(0) >= min_freq
    }
}

/// The three files of a data directory, unencoded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawCorpus {
    pub captions: Vec<CaptionRecord>,
    pub features: Vec<FeatureRecord>,
    pub splits: Vec<SplitRecord>,
}

impl RawCorpus {
    pub fn load_dir(dir: &Path) -> Result<Self> {
        Ok(RawCorpus {
            captions: load_corpus(&dir.join(CORPUS_FILE))?,
            features: load_features(&dir.join(FEATURES_FILE))?,
            splits: load_splits(&dir.join(SPLITS_FILE))?,
        })
    }

    /// Writes the three files and returns their paths.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let paths = vec![dir.join(CORPUS_FILE), dir.join(FEATURES_FILE), dir.join(SPLITS_FILE)];
        write_jsonl(&paths[0], &self.captions)?;
        write_jsonl(&paths[1], &self.features)?;
        write_jsonl(&paths[2], &self.splits)?;
        Ok(paths)
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// Parses one JSON value per non-blank line; errors carry the 1-based line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Writes via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn reject_duplicates<'a>(path: &Path, what: &str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::InvalidInput(format!("{}: duplicate {what} {id:?}", path.display())));
        }
    }
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Vec<CaptionRecord>> {
    let recs: Vec<CaptionRecord> = read_jsonl(path)?;
    reject_duplicates(path, "caption id", recs.iter().map(|r| r.id.as_str()))?;
    Ok(recs)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureRecord>> {
    let recs: Vec<FeatureRecord> = read_jsonl(path)?;
    reject_duplicates(path, "image id", recs.iter().map(|r| r.image_id.as_str()))?;
    if let Some(first) = recs.first() {
        let dim = first.vector.len();
        if let Some(bad) = recs.iter().find(|r| r.vector.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "{}: image {:?} has dimension {}, expected {dim}",
                path.display(),
                bad.image_id,
                bad.vector.len()
            )));
        }
    }
    Ok(recs)
}

pub fn load_splits(path: &Path) -> Result<Vec<SplitRecord>> {
    let recs: Vec<SplitRecord> = read_jsonl(path)?;
    reject_duplicates(path, "split id", recs.iter().map(|r| r.id.as_str()))?;
    Ok(recs)
}

/// Reads a whitespace-separated `word_a word_b rating` file and its JSON-lines
/// transcription companion. Pairs with an untranscribed word are counted in
/// `skipped`.
pub fn load_men(pairs_path: &Path, phon_path: &Path) -> Result<MenPairSet> {
    let words: Vec<MenWordRecord> = read_jsonl(phon_path)?;
    reject_duplicates(phon_path, "word", words.iter().map(|w| w.word.as_str()))?;
    let lookup: BTreeMap<&str, &MenWordRecord> = words.iter().map(|w| (w.word.as_str(), w)).collect();

    let text = read_to_string(pairs_path)?;
    let mut set = MenPairSet {
        train_counts: words.iter().map(|w| (w.word.clone(), w.train_count)).collect(),
        ..Default::default()
    };
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { path: pairs_path.to_path_buf(), line: i + 1, message };
        let [a, b, r] = fields[..] else {
            return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
        };
        let rating: f64 = r.parse().map_err(|_| parse_err(format!("bad rating {r:?}")))?;
        if !rating.is_finite() || rating < 0.0 {
            return Err(parse_err(format!("rating {rating} out of range")));
        }
        match (lookup.get(a), lookup.get(b)) {
            (Some(wa), Some(wb)) if !wa.phonemes.is_empty() && !wb.phonemes.is_empty() => set.pairs.push(MenPair {
                word_a: a.to_string(),
                word_b: b.to_string(),
                rating,
                phonemes_a: wa.phonemes.clone(),
                phonemes_b: wb.phonemes.clone(),
            }),
            _ => set.skipped += 1,
        }
    }
    Ok(set)
}

/// Writes a MEN pair set back out as the two files [`load_men`] reads.
pub fn write_men(set: &MenPairSet, pairs_path: &Path, phon_path: &Path) -> Result<()> {
    let mut text = String::new();
    let mut words: BTreeMap<&str, &[String]> = BTreeMap::new();
    for p in &set.pairs {
        text.push_str(&format!("{} {} {}\n", p.word_a, p.word_b, p.rating));
        words.insert(&p.word_a, &p.phonemes_a);
        words.insert(&p.word_b, &p.phonemes_b);
    }
    write_atomic(pairs_path, text.as_bytes())?;
    let recs: Vec<MenWordRecord> = words
        .into_iter()
        .map(|(w, ph)| MenWordRecord {
            word: w.to_string(),
            phonemes: ph.to_vec(),
            train_count: set.train_counts.get(w).copied().unwrap_or(0),
        })
        .collect();
    write_jsonl(phon_path, &recs)
}

//! Published full-scale scores, rendered next to local results.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

const RAW: &str = include_str!("../data/reference_scores.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub acc5: f64,
    pub acc10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScores {
    pub positive_rate: f64,
    pub majority: f64,
    pub layers: BTreeMap<usize, ProbeScores>,
    pub ngrams: BTreeMap<usize, ProbeScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub all: f64,
    pub frequent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScores {
    pub min_freq: usize,
    pub frequent_pairs: usize,
    #[serde(rename = "phon-gru")]
    pub phon_gru: BTreeMap<usize, Correlations>,
    #[serde(rename = "word-gru")]
    pub word_gru: BTreeMap<usize, Correlations>,
    #[serde(rename = "word-sum")]
    pub word_sum: BTreeMap<usize, Correlations>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditDistanceScores {
    pub layers: BTreeMap<usize, f64>,
    /// Human ratings against edit distance.
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstringScores {
    pub layers: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScores {
    pub note: String,
    pub retrieval: BTreeMap<String, RetrievalScores>,
    pub boundary: BoundaryScores,
    pub similarity: SimilarityScores,
    pub edit_distance: EditDistanceScores,
    pub substrings: SubstringScores,
}

pub fn reference_scores() -> ReferenceScores {
    serde_json::from_str(RAW).expect("bundled reference scores parse")
}

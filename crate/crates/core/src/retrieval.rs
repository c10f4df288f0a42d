//! Image search evaluation: rank every candidate image of a split by cosine
//! similarity to each predicted vector.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Utterance;
use crate::error::{invalid, Error, Result};
use crate::models::Predictor;
use crate::numerics::cosine_or_zero;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    /// 1-based rank of the correct image, per utterance.
    pub ranks: Vec<usize>,
    pub acc: BTreeMap<usize, f64>,
    pub n_candidates: usize,
}

impl RetrievalResult {
    pub fn acc_at(&self, k: usize) -> Option<f64> {
        self.acc.get(&k).copied()
    }

    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for &r in &self.ranks {
            *h.entry(r).or_insert(0) += 1;
        }
        h
    }
}

/// Rank of `candidates[correct]` for `prediction`: one plus the number of
/// candidates scoring higher, plus equal-scoring candidates at smaller index.
pub fn rank_of(prediction: &[f64], candidates: &[&[f64]], correct: usize) -> usize {
    let target = cosine_or_zero(prediction, candidates[correct]);
    1 + candidates
        .iter()
        .enumerate()
        .filter(|&(c, v)| {
            let s = cosine_or_zero(prediction, v);
            s > target || (s == target && c < correct)
        })
        .count()
}

pub fn accuracy_at(ranks: &[usize], k: usize) -> f64 {
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

/// Ranks precomputed predictions. Candidate order (by image id) is the
/// tie-break order.
pub fn rank_predictions(
    predictions: &[Vec<f64>],
    correct_ids: &[&str],
    candidates: &BTreeMap<&str, &[f64]>,
    ks: &[usize],
) -> Result<RetrievalResult> {
    if predictions.is_empty() {
        return invalid("retrieval over an empty split");
    }
    let n = candidates.len();
    if let Some(k) = ks.iter().find(|&&k| k == 0 || k > n) {
        return invalid(format!("k = {k} outside 1..={n}"));
    }
    let ids: Vec<&str> = candidates.keys().copied().collect();
    let vectors: Vec<&[f64]> = candidates.values().copied().collect();
    let ranks = predictions
        .par_iter()
        .zip(correct_ids)
        .map(|(p, id)| {
            let c =
                ids.binary_search(id).map_err(|_| Error::InvalidInput(format!("image {id:?} is not a candidate")))?;
            Ok(rank_of(p, &vectors, c))
        })
        .collect::<Result<Vec<usize>>>()?;
    let acc = ks.iter().map(|&k| (k, accuracy_at(&ranks, k))).collect();
    Ok(RetrievalResult { ranks, acc, n_candidates: n })
}

/// Predicts each utterance and ranks the distinct images of the split.
pub fn evaluate_retrieval<'a, P, F>(
    model: &P,
    utterances: &[Utterance],
    lookup: F,
    ks: &[usize],
) -> Result<RetrievalResult>
where
    P: Predictor + Sync + ?Sized,
    F: Fn(&str) -> Result<&'a [f64]>,
{
    if utterances.is_empty() {
        return invalid("retrieval over an empty split");
    }
    let mut candidates = BTreeMap::new();
    for u in utterances {
        candidates.insert(u.image_id.as_str(), lookup(&u.image_id)?);
    }
    let predictions = utterances.par_iter().map(|u| model.predict(u)).collect::<Result<Vec<_>>>()?;
    let ids: Vec<&str> = utterances.iter().map(|u| u.image_id.as_str()).collect();
    rank_predictions(&predictions, &ids, &candidates, ks)
}

/// JSON report of one retrieval evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub model_type: String,
    pub split: String,
    pub n_candidates: usize,
    pub n_queries: usize,
    pub acc: BTreeMap<usize, f64>,
    pub ranks_histogram: BTreeMap<usize, usize>,
}

impl RetrievalReport {
    pub fn new(model_type: &str, split: &str, r: &RetrievalResult) -> Self {
        RetrievalReport {
            model_type: model_type.to_string(),
            split: split.to_string(),
            n_candidates: r.n_candidates,
            n_queries: r.ranks.len(),
            acc: r.acc.clone(),
            ranks_histogram: r.histogram(),
        }
    }
}

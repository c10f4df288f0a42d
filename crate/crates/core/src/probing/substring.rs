use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Utterance;
use crate::error::{Error, Result};
use crate::models::Representations;
use crate::numerics::cosine_or_zero;

use super::{check_layer, final_activations};

/// How symbols inside shared substrings are counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanCounting {
    /// Once for every matching span that covers the symbol.
    #[default]
    PerSpan,
    /// Once per covered position.
    PerPosition,
}

impl std::str::FromStr for SpanCounting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-span" => Ok(SpanCounting::PerSpan),
            "per-position" => Ok(SpanCounting::PerPosition),
            _ => Err(Error::InvalidInput(format!("unknown span counting {s:?} (per-span, per-position)"))),
        }
    }
}

/// Index of the vector most cosine-similar to `vectors[i]`, excluding `i`
/// itself; the smaller index wins ties.
pub fn nearest_neighbor(vectors: &[Vec<f64>], i: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in vectors.iter().enumerate() {
        if j == i {
            continue;
        }
        let s = cosine_or_zero(&vectors[i], v);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j)
}

/// Mean position, counted from the end of `a` (last symbol = 1), of the
/// symbols of `a` inside substrings that also occur in `b`.
pub fn shared_substring_mean_position<T: PartialEq>(a: &[T], b: &[T]) -> Option<f64> {
    shared_substring_mean_position_with(a, b, SpanCounting::PerSpan)
}

pub fn shared_substring_mean_position_with<T: PartialEq>(a: &[T], b: &[T], counting: SpanCounting) -> Option<f64> {
    let n = a.len();
    let m = b.len();
    // reach[s]: length of the longest prefix of a[s..] found in b. Every
    // shorter prefix matches too, and no longer one does.
    let mut lce = vec![0usize; m + 1];
    let mut reach = vec![0usize; n];
    for s in (0..n).rev() {
        let mut next = vec![0usize; m + 1];
        for j in (0..m).rev() {
            if a[s] == b[j] {
                next[j] = 1 + lce[j + 1];
            }
        }
        reach[s] = next.iter().copied().max().unwrap_or(0);
        lce = next;
    }
    let (mut sum, mut count) = (0u64, 0u64);
    match counting {
        SpanCounting::PerSpan => {
            for (s, &len) in reach.iter().enumerate() {
                // symbol i is covered by the spans from s of length > i - s
                for i in s..s + len {
                    let spans = (len - (i - s)) as u64;
                    sum += spans * (n - i) as u64;
                    count += spans;
                }
            }
        }
        SpanCounting::PerPosition => {
            for (i, &len) in reach.iter().enumerate() {
                if len > 0 {
                    sum += (n - i) as u64;
                    count += 1;
                }
            }
        }
    }
    (count > 0).then(|| sum as f64 / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstringLayer {
    pub layer: usize,
    pub mean_position: Option<f64>,
    /// Sentences whose neighbor shares at least one symbol.
    pub n_defined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstringReport {
    pub counting: SpanCounting,
    pub n_sentences: usize,
    pub mean_length: f64,
    pub layers: Vec<SubstringLayer>,
}

/// For each sentence and layer, the nearest neighbor by final-timestep
/// activation and the mean shared-substring position against it.
pub fn substring_report<M>(
    model: &M,
    utterances: &[Utterance],
    layers: &[usize],
    counting: SpanCounting,
) -> Result<SubstringReport>
where
    M: Representations + Sync + ?Sized,
{
    if utterances.len() < 2 {
        return Err(Error::InvalidInput("nearest neighbors need at least 2 sentences".into()));
    }
    for &k in layers {
        check_layer(model, k)?;
    }
    let finals = utterances.par_iter().map(|u| final_activations(model, u)).collect::<Result<Vec<_>>>()?;
    let sentences: Vec<&[usize]> = utterances.iter().map(|u| &u.phonemes[..u.len_without_eos()]).collect();
    let layers = layers
        .iter()
        .map(|&k| {
            let vectors: Vec<Vec<f64>> = finals.iter().map(|f| f[k - 1].clone()).collect();
            let values: Vec<f64> = (0..vectors.len())
                .into_par_iter()
                .filter_map(|i| {
                    let j = nearest_neighbor(&vectors, i)?;
                    shared_substring_mean_position_with(sentences[i], sentences[j], counting)
                })
                .collect();
            SubstringLayer {
                layer: k,
                mean_position: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
                n_defined: values.len(),
            }
        })
        .collect();
    Ok(SubstringReport {
        counting,
        n_sentences: utterances.len(),
        mean_length: sentences.iter().map(|s| s.len()).sum::<usize>() as f64 / sentences.len() as f64,
        layers,
    })
}

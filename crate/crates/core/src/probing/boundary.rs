use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PhonemeVocab, Utterance};
use crate::error::{Error, Result};
use crate::models::Representations;
use crate::numerics::ZScoreStats;

use super::{
    check_layer, grid_search_c, logreg_eval, logreg_fit, majority_baseline, ProbeDataset, ProbeReport, ProbeSource,
    DEFAULT_C_GRID, DEFAULT_FOLDS,
};

/// Raw layer-`layer` (1-based) activations at every non-EOS timestep, labeled
/// with whether a word boundary follows.
pub fn collect_boundary_dataset<M>(model: &M, utterances: &[Utterance], layer: usize) -> Result<ProbeDataset>
where
    M: Representations + Sync + ?Sized,
{
    check_layer(model, layer)?;
    let per_utt = utterances
        .par_iter()
        .map(|u| {
            let mut acts = model.activations(u)?;
            let steps = std::mem::take(&mut acts[layer - 1]);
            if steps.len() != u.phonemes.len() {
                return Err(Error::InvalidInput(format!(
                    "boundary probe needs one activation per phoneme; utterance {} has {} phonemes and {} steps",
                    u.id,
                    u.phonemes.len(),
                    steps.len()
                )));
            }
            let n = u.len_without_eos();
            Ok(steps.into_iter().take(n).zip(u.boundary_after.iter().copied()).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, labels): (Vec<Vec<f64>>, Vec<bool>) = per_utt.into_iter().flatten().unzip();
    ProbeDataset::dense(rows, labels)
}

/// Fits z-score statistics on `train` and applies them to both sets.
pub fn standardize_pair(
    train: &ProbeDataset,
    test: &ProbeDataset,
) -> Result<(ProbeDataset, ProbeDataset, ZScoreStats)> {
    let super::ProbeFeatures::Dense(rows) = &train.features else {
        return Err(Error::InvalidInput("only dense probe features are standardized".into()));
    };
    let stats = ZScoreStats::fit(rows)?;
    Ok((train.standardized(&stats)?, test.standardized(&stats)?, stats))
}

/// A k-gram: `None` stands for the start pad `^`.
pub type NgramKey = Vec<Option<usize>>;

/// The k-grams (k = 1..=n) ending at position `t`, shortest first.
pub fn ngrams_at(phonemes: &[usize], t: usize, n: usize) -> Vec<NgramKey> {
    (1..=n).map(|k| (0..k).rev().map(|back| t.checked_sub(back).map(|i| phonemes[i])).collect()).collect()
}

/// Renders a k-gram with `^` for padding, symbols concatenated.
pub fn render_ngram(key: &[Option<usize>], vocab: &PhonemeVocab) -> String {
    key.iter()
        .map(|s| match s {
            None => "^".to_string(),
            Some(i) => vocab.vocab().symbol(*i).unwrap_or("?").to_string(),
        })
        .collect()
}

/// Indicator feature space over the n-grams observed in a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramFeaturizer {
    pub n: usize,
    pub index: BTreeMap<NgramKey, usize>,
}

impl NgramFeaturizer {
    pub fn fit(utterances: &[Utterance], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        let mut keys = std::collections::BTreeSet::new();
        for u in utterances {
            for t in 0..u.len_without_eos() {
                keys.extend(ngrams_at(&u.phonemes, t, n));
            }
        }
        let index = keys.into_iter().enumerate().map(|(i, k)| (k, i)).collect();
        Ok(NgramFeaturizer { n, index })
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// Active feature indices at `t`; grams unseen at fit time are dropped.
    pub fn features_at(&self, phonemes: &[usize], t: usize) -> Vec<usize> {
        let mut f: Vec<usize> =
            ngrams_at(phonemes, t, self.n).iter().filter_map(|k| self.index.get(k).copied()).collect();
        f.sort_unstable();
        f
    }

    pub fn transform(&self, utterances: &[Utterance]) -> Result<ProbeDataset> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for u in utterances {
            for t in 0..u.len_without_eos() {
                rows.push(self.features_at(&u.phonemes, t));
                labels.push(u.boundary_after[t]);
            }
        }
        ProbeDataset::sparse(self.dim(), rows, labels)
    }
}

pub fn ngram_boundary_dataset(utterances: &[Utterance], n: usize) -> Result<ProbeDataset> {
    NgramFeaturizer::fit(utterances, n)?.transform(utterances)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProbeConfig {
    pub layers: Vec<usize>,
    pub ngram_orders: Vec<usize>,
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for BoundaryProbeConfig {
    fn default() -> Self {
        BoundaryProbeConfig {
            layers: vec![1, 2, 3],
            ngram_orders: vec![1, 2, 3, 4],
            c_grid: DEFAULT_C_GRID.to_vec(),
            folds: DEFAULT_FOLDS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub config: BoundaryProbeConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub train_positive_rate: f64,
    pub test_positive_rate: f64,
    pub majority_baseline: f64,
    pub layers: Vec<ProbeReport>,
    pub ngrams: Vec<ProbeReport>,
}

/// Grid-searches C on `train`, refits on all of it and scores `test`.
pub fn probe_once(
    source: ProbeSource,
    train: &ProbeDataset,
    test: &ProbeDataset,
    config: &BoundaryProbeConfig,
) -> Result<ProbeReport> {
    let search = grid_search_c(train, &config.c_grid, config.folds, config.seed)?;
    let model = logreg_fit(train, search.best_c)?;
    let m = logreg_eval(&model, test)?;
    Ok(ProbeReport {
        source,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        majority_baseline: majority_baseline(&train.labels, &test.labels),
        chosen_c: search.best_c,
        grid: search.points,
        n_features: train.n_features(),
    })
}

/// Probes trained on `train` utterances and scored on `test` utterances,
/// one per requested layer and n-gram order.
pub fn boundary_probe_report<M>(
    model: &M,
    train: &[Utterance],
    test: &[Utterance],
    config: &BoundaryProbeConfig,
) -> Result<BoundaryReport>
where
    M: Representations + Sync + ?Sized,
{
    for &k in &config.layers {
        check_layer(model, k)?;
    }
    let layers = config
        .layers
        .par_iter()
        .map(|&k| {
            let tr = collect_boundary_dataset(model, train, k)?;
            let te = collect_boundary_dataset(model, test, k)?;
            let (tr, te, _) = standardize_pair(&tr, &te)?;
            probe_once(ProbeSource::Layer(k), &tr, &te, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let ngrams = config
        .ngram_orders
        .par_iter()
        .map(|&n| {
            let f = NgramFeaturizer::fit(train, n)?;
            probe_once(ProbeSource::Ngram(n), &f.transform(train)?, &f.transform(test)?, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = |utts: &[Utterance]| -> Vec<bool> {
        utts.iter().flat_map(|u| u.boundary_after[..u.len_without_eos()].iter().copied()).collect()
    };
    let (train_labels, test_labels) = (labels(train), labels(test));
    let rate = |l: &[bool]| l.iter().filter(|b| **b).count() as f64 / l.len().max(1) as f64;
    Ok(BoundaryReport {
        config: config.clone(),
        n_train: train_labels.len(),
        n_test: test_labels.len(),
        train_positive_rate: rate(&train_labels),
        test_positive_rate: rate(&test_labels),
        majority_baseline: majority_baseline(&train_labels, &test_labels),
        layers,
        ngrams,
    })
}

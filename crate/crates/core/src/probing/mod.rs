//! Diagnostic analyses of trained models: word-boundary classifiers, word
//! similarity correlations and nearest-neighbor shared substrings.

mod boundary;
mod logreg;
mod similarity;
mod substring;

pub use boundary::*;
pub use logreg::*;
pub use similarity::*;
pub use substring::*;

use serde::{Deserialize, Serialize};

use crate::data::Utterance;
use crate::error::{shape_err, Error, Result};
use crate::models::Representations;
use crate::numerics::ZScoreStats;

/// Probe inputs: dense rows, or sparse binary indicator rows listing the
/// active feature indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProbeFeatures {
    Dense(Vec<Vec<f64>>),
    Sparse { dim: usize, rows: Vec<Vec<usize>> },
}

impl ProbeFeatures {
    pub fn len(&self) -> usize {
        match self {
            ProbeFeatures::Dense(r) => r.len(),
            ProbeFeatures::Sparse { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            ProbeFeatures::Dense(r) => r.first().map_or(0, Vec::len),
            ProbeFeatures::Sparse { dim, .. } => *dim,
        }
    }

    pub fn row_dot(&self, row: usize, w: &[f64]) -> f64 {
        match self {
            ProbeFeatures::Dense(r) => crate::numerics::dot(&r[row], w),
            ProbeFeatures::Sparse { rows, .. } => rows[row].iter().map(|&j| w[j]).sum(),
        }
    }

    /// `out += scale * x_row`.
    pub fn add_row_scaled(&self, row: usize, scale: f64, out: &mut [f64]) {
        match self {
            ProbeFeatures::Dense(r) => {
                for (o, x) in out.iter_mut().zip(&r[row]) {
                    *o += scale * x;
                }
            }
            ProbeFeatures::Sparse { rows, .. } => {
                for &j in &rows[row] {
                    out[j] += scale;
                }
            }
        }
    }

    fn subset(&self, idx: &[usize]) -> ProbeFeatures {
        match self {
            ProbeFeatures::Dense(r) => ProbeFeatures::Dense(idx.iter().map(|&i| r[i].clone()).collect()),
            ProbeFeatures::Sparse { dim, rows } => {
                ProbeFeatures::Sparse { dim: *dim, rows: idx.iter().map(|&i| rows[i].clone()).collect() }
            }
        }
    }
}

/// Features with one binary label per row (true: a word boundary follows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDataset {
    pub features: ProbeFeatures,
    pub labels: Vec<bool>,
}

impl ProbeDataset {
    pub fn new(features: ProbeFeatures, labels: Vec<bool>) -> Result<Self> {
        if features.len() != labels.len() {
            return shape_err(format!("{} feature rows but {} labels", features.len(), labels.len()));
        }
        match &features {
            ProbeFeatures::Dense(rows) => {
                let d = features.dim();
                if rows.iter().any(|r| r.len() != d) {
                    return shape_err("ragged dense probe features");
                }
                if rows.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("non-finite probe feature".into()));
                }
            }
            ProbeFeatures::Sparse { dim, rows } => {
                if rows.iter().flatten().any(|j| j >= dim) {
                    return shape_err(format!("sparse feature index outside 0..{dim}"));
                }
            }
        }
        Ok(ProbeDataset { features, labels })
    }

    pub fn dense(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        Self::new(ProbeFeatures::Dense(rows), labels)
    }

    pub fn sparse(dim: usize, rows: Vec<Vec<usize>>, labels: Vec<bool>) -> Result<Self> {
        Self::new(ProbeFeatures::Sparse { dim, rows }, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.dim()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|b| **b).count()
    }

    pub fn positive_rate(&self) -> f64 {
        self.positives() as f64 / self.len().max(1) as f64
    }

    pub fn subset(&self, idx: &[usize]) -> ProbeDataset {
        ProbeDataset { features: self.features.subset(idx), labels: idx.iter().map(|&i| self.labels[i]).collect() }
    }

    /// Applies a z-score transform to dense features.
    pub fn standardized(&self, stats: &ZScoreStats) -> Result<ProbeDataset> {
        let ProbeFeatures::Dense(rows) = &self.features else {
            return Err(Error::InvalidInput("only dense probe features are standardized".into()));
        };
        let rows = rows.iter().map(|r| stats.apply(r)).collect::<Result<Vec<_>>>()?;
        ProbeDataset::dense(rows, self.labels.clone())
    }
}

/// What a probe was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSource {
    Layer(usize),
    Ngram(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub source: ProbeSource,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub majority_baseline: f64,
    pub chosen_c: f64,
    pub grid: Vec<GridPoint>,
    pub n_features: usize,
}

/// Per-layer activations at the final (EOS) timestep.
pub fn final_activations<M: Representations + ?Sized>(model: &M, u: &Utterance) -> Result<Vec<Vec<f64>>> {
    let layers = model.activations(u)?;
    layers
        .into_iter()
        .map(|steps| {
            steps.last().cloned().ok_or_else(|| Error::InvalidInput(format!("utterance {} has no timesteps", u.id)))
        })
        .collect()
}

/// Checks a 1-based layer index against the model depth.
pub fn check_layer<M: Representations + ?Sized>(model: &M, layer: usize) -> Result<()> {
    if layer == 0 || layer > model.num_layers() {
        return Err(Error::InvalidInput(format!("layer {layer} out of range 1..={}", model.num_layers())));
    }
    Ok(())
}

//! Activation functions, similarity and rank statistics, edit distance, and
//! gradient-norm clipping shared by the rest of the crate.

mod linalg;

pub use linalg::{add, axpy, dot, norm, sub, Mat};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};

/// Slope of the gate sigmoid.
pub const STEEP_SLOPE: f64 = 3.75;

/// Upper clip of the candidate activation.
pub const RELU_CAP: f64 = 5.0;

/// Standard deviations below this are treated as zero by the z-score transform.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Logistic function with slope 3.75, used for the update and reset gates.
#[inline]
pub fn steep_sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-STEEP_SLOPE * z).exp())
}

/// Derivative of [`steep_sigmoid`] expressed through its output.
#[inline]
pub fn steep_sigmoid_grad_from_output(s: f64) -> f64 {
    STEEP_SLOPE * s * (1.0 - s)
}

/// Rectifier clipped to `[0, 5]`.
#[inline]
pub fn clipped_relu(z: f64) -> f64 {
    (0.5 * (z + z.abs())).clamp(0.0, RELU_CAP)
}

/// Subgradient of [`clipped_relu`]; zero at both kinks.
#[inline]
pub fn clipped_relu_grad(z: f64) -> f64 {
    if z > 0.0 && z < RELU_CAP {
        1.0
    } else {
        0.0
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return shape_err(format!("cosine of vectors of length {} and {}", a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return invalid("cosine similarity of a zero-norm vector");
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity that maps a zero-norm side to 0 instead of failing.
/// Lengths must match.
pub fn cosine_or_zero(a: &[f64], b: &[f64]) -> f64 {
    let n = norm(a) * norm(b);
    if n == 0.0 {
        0.0
    } else {
        dot(a, b) / n
    }
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScoreStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return invalid("z-score fit needs at least one row");
        };
        let dim = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return shape_err(format!("row of width {} in z-score fit of width {dim}", row.len()));
            }
            axpy(1.0, row, &mut mean);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((v, x), m) in var.iter_mut().zip(row.as_ref()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(ZScoreStats { mean, std })
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return shape_err(format!("vector of width {} for z-score of width {}", v.len(), self.dim()));
        }
        Ok(v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| if *s < DEGENERATE_STD { 0.0 } else { (x - m) / s })
            .collect())
    }
}

pub fn zscore_fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<ZScoreStats> {
    ZScoreStats::fit(rows)
}

pub fn zscore_apply(stats: &ZScoreStats, v: &[f64]) -> Result<Vec<f64>> {
    stats.apply(v)
}

/// 1-based ranks with ties sharing the average of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return shape_err(format!("correlation of lengths {} and {}", xs.len(), ys.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return invalid("correlation with zero variance");
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average-tie ranks.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return shape_err(format!("spearman of lengths {} and {}", xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return invalid(format!("spearman needs at least 3 pairs, got {}", xs.len()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Unit-cost edit distance, two-row dynamic program.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the length of the longer sequence.
pub fn normalized_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64> {
    let longer = a.len().max(b.len());
    if longer == 0 {
        return invalid("normalized edit distance of two empty sequences");
    }
    Ok(levenshtein(a, b) as f64 / longer as f64)
}

/// Global L2 norm over every entry of every matrix.
pub fn global_norm<'a>(mats: impl IntoIterator<Item = &'a Mat>) -> f64 {
    mats.into_iter().map(Mat::sum_squares).sum::<f64>().sqrt()
}

/// Rescales all matrices jointly so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut Mat], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "clip norm must be positive");
    let norm = grads.iter().map(|m| m.sum_squares()).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale(scale);
        }
    }
    norm
}

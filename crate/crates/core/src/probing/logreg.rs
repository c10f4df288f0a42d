use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{dot, norm};

use super::{ProbeDataset, ProbeFeatures};

pub const DEFAULT_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_FOLDS: usize = 5;
pub const GRAD_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
}

impl LogRegModel {
    pub fn decision(&self, x: &ProbeFeatures, row: usize) -> f64 {
        x.row_dot(row, &self.weights) + self.bias
    }

    pub fn probability(&self, x: &ProbeFeatures, row: usize) -> f64 {
        sigmoid(self.decision(x, row))
    }

    /// Positive iff the probability exceeds 0.5.
    pub fn predict(&self, x: &ProbeFeatures, row: usize) -> bool {
        self.decision(x, row) > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Parameters are the weights followed by the bias.
struct Problem<'a> {
    x: &'a ProbeFeatures,
    y: &'a [bool],
    c: f64,
    dim: usize,
}

impl Problem<'_> {
    fn scores(&self, theta: &[f64]) -> Vec<f64> {
        let (w, b) = theta.split_at(self.dim);
        (0..self.y.len()).map(|i| self.x.row_dot(i, w) + b[0]).collect()
    }

    fn objective_from_scores(&self, theta: &[f64], scores: &[f64]) -> f64 {
        let data: f64 = scores.iter().zip(self.y).map(|(&s, &y)| softplus(if y { -s } else { s })).sum();
        self.c * data + 0.5 * dot(&theta[..self.dim], &theta[..self.dim])
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        self.objective_from_scores(theta, &self.scores(theta))
    }

    fn gradient_from_scores(&self, theta: &[f64], scores: &[f64]) -> Vec<f64> {
        let mut g = theta[..self.dim].to_vec();
        g.push(0.0);
        for (i, (&s, &y)) in scores.iter().zip(self.y).enumerate() {
            let r = self.c * (sigmoid(s) - if y { 1.0 } else { 0.0 });
            self.x.add_row_scaled(i, r, &mut g[..self.dim]);
            g[self.dim] += r;
        }
        g
    }

    /// (C X^T D X + diag(1..1, 0)) v with D = p(1-p).
    fn hessian_vec(&self, curvature: &[f64], v: &[f64]) -> Vec<f64> {
        let (vw, vb) = v.split_at(self.dim);
        let mut out = vw.to_vec();
        out.push(0.0);
        for (i, &d) in curvature.iter().enumerate() {
            let xv = self.x.row_dot(i, vw) + vb[0];
            let r = self.c * d * xv;
            self.x.add_row_scaled(i, r, &mut out[..self.dim]);
            out[self.dim] += r;
        }
        out
    }
}

/// Truncated conjugate gradient for H p = -g.
fn conjugate_gradient(problem: &Problem, curvature: &[f64], g: &[f64], max_iter: usize) -> Vec<f64> {
    let n = g.len();
    let gnorm = norm(g);
    let tol = (0.5f64).min(gnorm.sqrt()) * gnorm;
    let mut p = vec![0.0; n];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol {
            break;
        }
        let hd = problem.hessian_vec(curvature, &d);
        let dhd = dot(&d, &hd);
        if dhd <= 0.0 {
            break;
        }
        let alpha = rr / dhd;
        for j in 0..n {
            p[j] += alpha * d[j];
            r[j] -= alpha * hd[j];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for j in 0..n {
            d[j] = r[j] + beta * d[j];
        }
    }
    if p.iter().all(|v| *v == 0.0) {
        g.iter().map(|v| -v).collect()
    } else {
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitInfo {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub objective: f64,
}

/// Objective `C * sum(log-loss) + 0.5 * |w|^2` with an unregularized bias.
pub fn logreg_objective(model: &LogRegModel, data: &ProbeDataset) -> f64 {
    let p = Problem { x: &data.features, y: &data.labels, c: model.c, dim: data.n_features() };
    p.objective(&theta_of(model))
}

pub fn logreg_gradient(model: &LogRegModel, data: &ProbeDataset) -> Vec<f64> {
    let p = Problem { x: &data.features, y: &data.labels, c: model.c, dim: data.n_features() };
    let theta = theta_of(model);
    p.gradient_from_scores(&theta, &p.scores(&theta))
}

fn theta_of(model: &LogRegModel) -> Vec<f64> {
    let mut t = model.weights.clone();
    t.push(model.bias);
    t
}

pub fn logreg_fit(data: &ProbeDataset, c: f64) -> Result<LogRegModel> {
    logreg_fit_detailed(data, c).map(|(m, _)| m)
}

/// Newton-CG with backtracking, stopping at gradient norm below 1e-6 or after
/// 10,000 iterations.
pub fn logreg_fit_detailed(data: &ProbeDataset, c: f64) -> Result<(LogRegModel, FitInfo)> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("regularization C must be positive, got {c}")));
    }
    if data.len() < 2 {
        return invalid("logistic regression needs at least 2 examples");
    }
    let pos = data.positives();
    if pos == 0 || pos == data.len() {
        return invalid("logistic regression needs both classes in the training set");
    }
    let dim = data.n_features();
    let problem = Problem { x: &data.features, y: &data.labels, c, dim };
    let mut theta = vec![0.0; dim + 1];
    let mut scores = problem.scores(&theta);
    let mut f = problem.objective_from_scores(&theta, &scores);
    let mut g = problem.gradient_from_scores(&theta, &scores);
    let mut gnorm = norm(&g);
    let mut iterations = 0;
    let cg_iter = (dim + 1).clamp(10, 500);

    while gnorm >= GRAD_TOLERANCE && iterations < MAX_ITERATIONS {
        iterations += 1;
        let curvature: Vec<f64> = scores
            .iter()
            .map(|&s| {
                let p = sigmoid(s);
                p * (1.0 - p)
            })
            .collect();
        let mut dir = conjugate_gradient(&problem, &curvature, &g, cg_iter);
        if dot(&dir, &g) >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
        }
        let slope = dot(&dir, &g);
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let cs = problem.scores(&cand);
            let cf = problem.objective_from_scores(&cand, &cs);
            let cg = problem.gradient_from_scores(&cand, &cs);
            let cgn = norm(&cg);
            // near the optimum the objective no longer resolves the decrease,
            // so a step that keeps it level and lowers the gradient norm also counts
            let armijo = cf <= f + 1e-4 * step * slope;
            let level = cf <= f + 1e-12 * f.abs().max(1.0) && cgn < gnorm;
            if armijo || level {
                (theta, scores, f, g, gnorm) = (cand, cs, cf, cg, cgn);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            log::warn!("line search stalled at gradient norm {gnorm:e} (C = {c})");
            break;
        }
    }
    if gnorm >= GRAD_TOLERANCE {
        log::warn!("logistic regression stopped at gradient norm {gnorm:e} after {iterations} iterations (C = {c})");
    }
    let bias = theta.pop().expect("bias");
    Ok((LogRegModel { weights: theta, bias, c }, FitInfo { iterations, gradient_norm: gnorm, objective: f }))
}

/// Accuracy, and precision and recall of the positive class. Precision is 0
/// when nothing is predicted positive, recall is 0 when no label is positive.
pub fn logreg_eval(model: &LogRegModel, data: &ProbeDataset) -> Result<Metrics> {
    if model.weights.len() != data.n_features() {
        return Err(Error::Shape(format!(
            "model has {} weights, data has {} features",
            model.weights.len(),
            data.n_features()
        )));
    }
    if data.is_empty() {
        return invalid("evaluation on an empty probe dataset");
    }
    let predicted: Vec<bool> = (0..data.len()).map(|i| model.predict(&data.features, i)).collect();
    Ok(metrics(&predicted, &data.labels))
}

pub fn metrics(predicted: &[bool], labels: &[bool]) -> Metrics {
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in predicted.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
        correct += usize::from(p == l);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Metrics { accuracy: ratio(correct, labels.len()), precision: ratio(tp, tp + fp), recall: ratio(tp, tp + fn_) }
}

/// Accuracy on `test` of always predicting the majority label of `train`
/// (negative on a tie).
pub fn majority_baseline(train: &[bool], test: &[bool]) -> f64 {
    let pos = train.iter().filter(|b| **b).count();
    let majority = pos * 2 > train.len();
    test.iter().filter(|&&l| l == majority).count() as f64 / test.len().max(1) as f64
}

/// Seeded fold of each example: a shuffled order dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    /// Mean held-out accuracy over the folds that were not skipped.
    pub mean_accuracy: Option<f64>,
    pub folds_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_c: f64,
    pub points: Vec<GridPoint>,
    pub skipped_folds: usize,
}

/// Cross-validated choice of C: highest mean fold accuracy, smaller C on
/// ties. Folds whose held-out part or complement holds a single class are
/// skipped with a warning.
pub fn grid_search_c(data: &ProbeDataset, grid: &[f64], folds: usize, seed: u64) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Config("C grid is empty".into()));
    }
    if let Some(c) = grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(Error::Config(format!("C grid value {c} is not positive")));
    }
    if folds < 2 {
        return Err(Error::Config("cross validation needs at least 2 folds".into()));
    }
    if data.len() < folds {
        return invalid(format!("{} examples are too few for {folds} folds", data.len()));
    }
    let assignment = fold_assignment(data.len(), folds, seed);
    let mut splits = Vec::new();
    let mut skipped_folds = 0;
    for f in 0..folds {
        let test: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == f).collect();
        let train: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] != f).collect();
        let single = |idx: &[usize]| {
            let pos = idx.iter().filter(|&&i| data.labels[i]).count();
            pos == 0 || pos == idx.len()
        };
        if single(&test) || single(&train) {
            log::warn!("skipping cross-validation fold {f}: single class");
            skipped_folds += 1;
            continue;
        }
        splits.push((data.subset(&train), data.subset(&test)));
    }
    let points = grid
        .iter()
        .map(|&c| {
            let accs = splits
                .iter()
                .map(|(tr, te)| Ok(logreg_eval(&logreg_fit(tr, c)?, te)?.accuracy))
                .collect::<Result<Vec<f64>>>()?;
            Ok(GridPoint {
                c,
                mean_accuracy: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
                folds_used: accs.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = points.iter().filter_map(|p| p.mean_accuracy.map(|a| (a, p.c))).fold(
        None,
        |best: Option<(f64, f64)>, (a, c)| match best {
            Some((ba, bc)) if ba > a || (ba == a && bc <= c) => Some((ba, bc)),
            _ => Some((a, c)),
        },
    );
    let Some((_, best_c)) = best else {
        return invalid("every cross-validation fold was skipped");
    };
    Ok(GridSearchResult { best_c, points, skipped_folds })
}

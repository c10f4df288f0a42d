//! Cosine-distance loss and reverse-mode gradients through all three models.

use rayon::prelude::*;

use crate::data::Utterance;
use crate::error::{invalid, shape_err, Result};
use crate::models::{GruLayerParams, GruStep, Model, PhonGruModel, StepInput, WordGruModel, WordSumModel};
use crate::numerics::{clipped_relu_grad, cosine_similarity, dot, norm, steep_sigmoid_grad_from_output, Mat};

/// Examples per work unit. Units are reduced in index order, so results do
/// not depend on the number of threads.
const CHUNK: usize = 8;

/// `1 - cos(prediction, target)`.
pub fn loss(prediction: &[f64], target: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(prediction, target)?)
}

/// Loss and its gradient with respect to the prediction.
pub fn loss_grad(prediction: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if prediction.len() != target.len() {
        return shape_err(format!("prediction of width {} for target of width {}", prediction.len(), target.len()));
    }
    let (np, nt) = (norm(prediction), norm(target));
    if np == 0.0 || nt == 0.0 {
        return invalid("cosine loss of a zero-norm vector");
    }
    let pt = dot(prediction, target);
    let cos = pt / (np * nt);
    let grad = prediction.iter().zip(target).map(|(p, t)| -(t / (np * nt) - cos * p / (np * np))).collect();
    Ok((1.0 - cos, grad))
}

/// Backpropagates through one layer given the gradient reaching each of its
/// states from outside the recurrence. Returns input gradients if requested.
fn backprop_layer(
    p: &GruLayerParams,
    g: &mut GruLayerParams,
    steps: &[GruStep],
    inputs: &[StepInput<'_>],
    dh_ext: &[Vec<f64>],
    want_dx: bool,
) -> Option<Vec<Vec<f64>>> {
    let d = p.hidden_dim();
    let zero = vec![0.0; d];
    let mut dh_carry = vec![0.0; d];
    let mut dxs = want_dx.then(|| vec![Vec::new(); steps.len()]);
    let (mut dz, mut dr, mut da_c, mut rh) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);

    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        let h_prev = if t == 0 { zero.as_slice() } else { steps[t - 1].h.as_slice() };
        let dh: Vec<f64> = dh_ext[t].iter().zip(&dh_carry).map(|(a, b)| a + b).collect();
        if dh.iter().all(|v| *v == 0.0) {
            dh_carry.iter_mut().for_each(|v| *v = 0.0);
            if let Some(dxs) = dxs.as_mut() {
                dxs[t] = vec![0.0; p.input_dim()];
            }
            continue;
        }

        let mut dh_prev = vec![0.0; d];
        for i in 0..d {
            dz[i] = dh[i] * (s.candidate[i] - h_prev[i]) * steep_sigmoid_grad_from_output(s.z[i]);
            da_c[i] = dh[i] * s.z[i] * clipped_relu_grad(s.pre_candidate[i]);
            dh_prev[i] = dh[i] * (1.0 - s.z[i]);
            rh[i] = s.r[i] * h_prev[i];
        }

        // candidate path
        g.u.add_outer(&da_c, &rh);
        let mut d_rh = vec![0.0; d];
        p.u.matvec_t_acc(&da_c, &mut d_rh);
        for i in 0..d {
            dr[i] = d_rh[i] * h_prev[i] * steep_sigmoid_grad_from_output(s.r[i]);
            dh_prev[i] += d_rh[i] * s.r[i];
        }
        // gates
        g.u_r.add_outer(&dr, h_prev);
        p.u_r.matvec_t_acc(&dr, &mut dh_prev);
        g.u_z.add_outer(&dz, h_prev);
        p.u_z.matvec_t_acc(&dz, &mut dh_prev);

        match inputs[t] {
            StepInput::OneHot(c) => {
                g.w.add_to_column(c, &da_c);
                g.w_r.add_to_column(c, &dr);
                g.w_z.add_to_column(c, &dz);
            }
            StepInput::Dense(x) => {
                g.w.add_outer(&da_c, x);
                g.w_r.add_outer(&dr, x);
                g.w_z.add_outer(&dz, x);
            }
        }
        if let Some(dxs) = dxs.as_mut() {
            let mut dx = vec![0.0; p.input_dim()];
            p.w.matvec_t_acc(&da_c, &mut dx);
            p.w_r.matvec_t_acc(&dr, &mut dx);
            p.w_z.matvec_t_acc(&dz, &mut dx);
            dxs[t] = dx;
        }
        dh_carry = dh_prev;
    }
    dxs
}

fn phon_example(m: &PhonGruModel, g: &mut PhonGruModel, u: &Utterance, target: &[f64], weight: f64) -> Result<f64> {
    let f = m.forward_detailed(&u.phonemes)?;
    let Ok((loss, dpred)) = loss_grad(&f.prediction, target) else {
        return degenerate(&f.prediction, target);
    };
    let dpred: Vec<f64> = dpred.iter().map(|v| v * weight).collect();
    let n = u.phonemes.len();
    let k_top = m.layers.len() - 1;

    g.projection.add_outer(&dpred, &f.outputs[k_top][n - 1]);
    let mut d_out = vec![vec![0.0; m.hidden_dim()]; n];
    m.projection.matvec_t_acc(&dpred, &mut d_out[n - 1]);

    for k in (0..=k_top).rev() {
        if k == 0 {
            let inputs: Vec<StepInput> = u.phonemes.iter().map(|&p| StepInput::OneHot(p)).collect();
            backprop_layer(&m.layers[0], &mut g.layers[0], &f.steps[0], &inputs, &d_out, false);
        } else {
            let inputs: Vec<StepInput> = f.outputs[k - 1].iter().map(|x| StepInput::Dense(x)).collect();
            let dx =
                backprop_layer(&m.layers[k], &mut g.layers[k], &f.steps[k], &inputs, &d_out, true).expect("requested");
            // residual connection passes the output gradient straight to the input
            d_out = d_out.iter().zip(dx).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        }
    }
    Ok(loss)
}

fn word_gru_example(m: &WordGruModel, g: &mut WordGruModel, u: &Utterance, target: &[f64], weight: f64) -> Result<f64> {
    let f = m.forward_detailed(&u.words)?;
    let Ok((loss, dpred)) = loss_grad(&f.prediction, target) else {
        return degenerate(&f.prediction, target);
    };
    let dpred: Vec<f64> = dpred.iter().map(|v| v * weight).collect();
    let n = u.words.len();
    g.projection.add_outer(&dpred, &f.steps[n - 1].h);
    let mut dh = vec![vec![0.0; m.layer.hidden_dim()]; n];
    m.projection.matvec_t_acc(&dpred, &mut dh[n - 1]);
    let embedded: Vec<Vec<f64>> = u.words.iter().map(|&w| m.embeddings.column(w)).collect();
    let inputs: Vec<StepInput> = embedded.iter().map(|x| StepInput::Dense(x)).collect();
    let dx = backprop_layer(&m.layer, &mut g.layer, &f.steps, &inputs, &dh, true).expect("requested");
    for (&w, d) in u.words.iter().zip(&dx) {
        g.embeddings.add_to_column(w, d);
    }
    Ok(loss)
}

fn word_sum_example(m: &WordSumModel, g: &mut WordSumModel, u: &Utterance, target: &[f64], weight: f64) -> Result<f64> {
    let sums = m.running_sums(&u.words)?;
    let s = sums.last().expect("nonempty");
    let pred = m.projection.matvec(s);
    let Ok((loss, dpred)) = loss_grad(&pred, target) else {
        return degenerate(&pred, target);
    };
    let dpred: Vec<f64> = dpred.iter().map(|v| v * weight).collect();
    g.projection.add_outer(&dpred, s);
    let mut ds = vec![0.0; m.embeddings.rows()];
    m.projection.matvec_t_acc(&dpred, &mut ds);
    for &w in &u.words {
        g.embeddings.add_to_column(w, &ds);
    }
    Ok(loss)
}

/// A zero-norm prediction has no defined cosine; it scores the maximal
/// non-opposed loss of 1 and contributes no gradient.
fn degenerate(prediction: &[f64], target: &[f64]) -> Result<f64> {
    if prediction.len() != target.len() {
        return shape_err("prediction and target widths differ");
    }
    if norm(target) == 0.0 {
        return invalid("zero-norm target vector");
    }
    Ok(1.0)
}

/// Adds `weight * d loss / d params` for one example into `grad`; returns the loss.
pub fn accumulate_example(model: &Model, grad: &mut Model, u: &Utterance, target: &[f64], weight: f64) -> Result<f64> {
    match (model, grad) {
        (Model::PhonGru(m), Model::PhonGru(g)) => phon_example(m, g, u, target, weight),
        (Model::WordGru(m), Model::WordGru(g)) => word_gru_example(m, g, u, target, weight),
        (Model::WordSum(m), Model::WordSum(g)) => word_sum_example(m, g, u, target, weight),
        _ => shape_err("gradient buffer is for a different model type"),
    }
}

fn add_into(acc: &mut Model, other: &Model) {
    for (a, b) in acc.tensors_mut().into_iter().zip(other.tensors()) {
        a.add_scaled(1.0, b);
    }
}

/// Gradient of `sum_i weights[i] * loss_i`, plus that weighted loss.
pub fn weighted_gradients(model: &Model, batch: &[(&Utterance, &[f64])], weights: &[f64]) -> Result<(f64, Model)> {
    if batch.is_empty() {
        return invalid("empty batch");
    }
    if weights.len() != batch.len() {
        return shape_err("one weight per example required");
    }
    let parts: Vec<Result<(f64, Model)>> = batch
        .par_chunks(CHUNK)
        .zip(weights.par_chunks(CHUNK))
        .map(|(examples, ws)| {
            let mut g = model.zeros_like();
            let mut loss = 0.0;
            for ((u, t), w) in examples.iter().zip(ws) {
                loss += w * accumulate_example(model, &mut g, u, t, *w)?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut parts = parts.into_iter();
    let (mut loss, mut grad) = parts.next().expect("nonempty")?;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        add_into(&mut grad, &g);
    }
    Ok((loss, grad))
}

/// Mean batch loss and its exact gradient.
pub fn gradients(model: &Model, batch: &[(&Utterance, &[f64])]) -> Result<(f64, Model)> {
    let w = 1.0 / batch.len().max(1) as f64;
    weighted_gradients(model, batch, &vec![w; batch.len()])
}

/// Mean loss without gradients.
pub fn batch_loss(model: &Model, batch: &[(&Utterance, &[f64])]) -> Result<f64> {
    use crate::models::Predictor;
    if batch.is_empty() {
        return invalid("empty batch");
    }
    let losses: Vec<Result<f64>> = batch
        .par_iter()
        .map(|(u, t)| {
            let p = model.predict(u)?;
            match loss(&p, t) {
                Ok(l) => Ok(l),
                Err(_) => degenerate(&p, t),
            }
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / batch.len() as f64)
}

/// Every learnable entry of `model`, flattened in tensor order.
pub fn flatten(model: &Model) -> Vec<f64> {
    model.tensors().iter().flat_map(|t| t.as_slice().iter().copied()).collect()
}

pub(crate) fn tensor_of_flat_index(model: &Model, mut idx: usize) -> (usize, usize) {
    for (i, t) in model.tensors().iter().enumerate() {
        let n = t.as_slice().len();
        if idx < n {
            return (i, idx);
        }
        idx -= n;
    }
    panic!("flat index out of range")
}

/// Mutable access to one flattened parameter.
pub fn param_mut(model: &mut Model, flat_index: usize) -> &mut f64 {
    let (t, i) = tensor_of_flat_index(model, flat_index);
    let mut tensors: Vec<&mut Mat> = model.tensors_mut();
    &mut tensors.swap_remove(t).as_mut_slice()[i]
}

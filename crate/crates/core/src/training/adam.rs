use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::numerics::Mat;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn new(learning_rate: f64) -> Self {
        AdamHyper { learning_rate, beta1: DEFAULT_BETA1, beta2: DEFAULT_BETA2, epsilon: DEFAULT_EPSILON }
    }
}

/// Bias-corrected first and second moment estimates, one pair per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(hyper: AdamHyper, params: impl IntoIterator<Item = &'a Mat>) -> Self {
        let m: Vec<Mat> = params.into_iter().map(|p| Mat::zeros(p.rows(), p.cols())).collect();
        AdamState { hyper, v: m.clone(), m, t: 0 }
    }

    /// One update `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [&mut Mat], grads: &[&Mat]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return shape_err(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return shape_err(format!("tensor {:?} vs gradient {:?}", p.shape(), g.shape()));
            }
        }
        self.t += 1;
        let AdamHyper { learning_rate, beta1, beta2, epsilon } = self.hyper;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (p, g, m, v) = (p.as_mut_slice(), g.as_slice(), m.as_mut_slice(), v.as_mut_slice());
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut [&mut Mat], grads: &[&Mat], state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}

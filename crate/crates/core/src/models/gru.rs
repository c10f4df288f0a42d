//! Bias-free GRU cell with steep-sigmoid gates and clipped-ReLU candidates.

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::numerics::{clipped_relu, steep_sigmoid, Mat};

/// Weights of one GRU layer. Input matrices are `hidden x input`, recurrent
/// ones `hidden x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    /// candidate, input side
    pub w: Mat,
    /// update gate, input side
    pub w_z: Mat,
    /// reset gate, input side
    pub w_r: Mat,
    pub u: Mat,
    pub u_z: Mat,
    pub u_r: Mat,
}

impl GruLayerParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let wi = || Mat::zeros(hidden_dim, input_dim);
        let wh = || Mat::zeros(hidden_dim, hidden_dim);
        GruLayerParams { w: wi(), w_z: wi(), w_r: wi(), u: wh(), u_z: wh(), u_r: wh() }
    }

    pub fn glorot<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        GruLayerParams {
            w: Mat::glorot(hidden_dim, input_dim, rng),
            w_z: Mat::glorot(hidden_dim, input_dim, rng),
            w_r: Mat::glorot(hidden_dim, input_dim, rng),
            u: Mat::glorot(hidden_dim, hidden_dim, rng),
            u_z: Mat::glorot(hidden_dim, hidden_dim, rng),
            u_r: Mat::glorot(hidden_dim, hidden_dim, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden_dim(), self.input_dim());
        for m in [&self.w, &self.w_z, &self.w_r] {
            if m.shape() != (h, i) {
                return shape_err(format!("input weight {:?}, expected {:?}", m.shape(), (h, i)));
            }
        }
        for m in [&self.u, &self.u_z, &self.u_r] {
            if m.shape() != (h, h) {
                return shape_err(format!("recurrent weight {:?}, expected {:?}", m.shape(), (h, h)));
            }
        }
        Ok(())
    }

    /// Matrices in the fixed order `W, W_z, W_r, U, U_z, U_r`.
    pub fn tensors(&self) -> [&Mat; 6] {
        [&self.w, &self.w_z, &self.w_r, &self.u, &self.u_z, &self.u_r]
    }

    pub fn tensors_mut(&mut self) -> [&mut Mat; 6] {
        [&mut self.w, &mut self.w_z, &mut self.w_r, &mut self.u, &mut self.u_z, &mut self.u_r]
    }

    pub const TENSOR_NAMES: [&'static str; 6] = ["W", "W_z", "W_r", "U", "U_z", "U_r"];
}

/// Layer input at one timestep: a one-hot index or a dense vector.
#[derive(Debug, Clone, Copy)]
pub enum StepInput<'a> {
    OneHot(usize),
    Dense(&'a [f64]),
}

impl StepInput<'_> {
    /// `out += m * x`
    #[inline]
    pub(crate) fn apply(&self, m: &Mat, out: &mut [f64]) {
        match *self {
            StepInput::OneHot(i) => m.add_column_to(i, out),
            StepInput::Dense(x) => m.matvec_acc(x, out),
        }
    }
}

/// Everything computed at one timestep, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStep {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    /// Candidate pre-activation `W x + U (r * h_prev)`.
    pub pre_candidate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn step(p: &GruLayerParams, x: StepInput<'_>, h_prev: &[f64]) -> GruStep {
    let d = p.hidden_dim();
    let mut az = p.u_z.matvec(h_prev);
    x.apply(&p.w_z, &mut az);
    let z: Vec<f64> = az.into_iter().map(steep_sigmoid).collect();

    let mut ar = p.u_r.matvec(h_prev);
    x.apply(&p.w_r, &mut ar);
    let r: Vec<f64> = ar.into_iter().map(steep_sigmoid).collect();

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut pre_candidate = p.u.matvec(&rh);
    x.apply(&p.w, &mut pre_candidate);
    let candidate: Vec<f64> = pre_candidate.iter().copied().map(clipped_relu).collect();

    let h = (0..d).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * candidate[i]).collect();
    GruStep { z, r, pre_candidate, candidate, h }
}

fn check_dense(p: &GruLayerParams, x: &[f64], h_prev: &[f64]) -> Result<()> {
    if x.len() != p.input_dim() {
        return shape_err(format!("input of width {}, layer expects {}", x.len(), p.input_dim()));
    }
    if h_prev.len() != p.hidden_dim() {
        return shape_err(format!("state of width {}, layer expects {}", h_prev.len(), p.hidden_dim()));
    }
    Ok(())
}

/// One GRU update: `h = (1 - z) * h_prev + z * candidate`.
pub fn gru_cell(x: &[f64], h_prev: &[f64], p: &GruLayerParams) -> Result<Vec<f64>> {
    check_dense(p, x, h_prev)?;
    Ok(step(p, StepInput::Dense(x), h_prev).h)
}

/// Unrolls the cell over a sequence, returning every state.
pub fn gru_layer(xs: &[Vec<f64>], h0: &[f64], p: &GruLayerParams) -> Result<Vec<Vec<f64>>> {
    if xs.is_empty() {
        return shape_err("empty input sequence");
    }
    let mut h = h0.to_vec();
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        check_dense(p, x, &h)?;
        h = step(p, StepInput::Dense(x), &h).h;
        out.push(h.clone());
    }
    Ok(out)
}

/// GRU states plus the layer input.
pub fn residual_layer(xs: &[Vec<f64>], h0: &[f64], p: &GruLayerParams) -> Result<Vec<Vec<f64>>> {
    if p.input_dim() != p.hidden_dim() {
        return shape_err(format!(
            "residual layer needs input dim == hidden dim, got {} and {}",
            p.input_dim(),
            p.hidden_dim()
        ));
    }
    let states = gru_layer(xs, h0, p)?;
    Ok(states.into_iter().zip(xs).map(|(h, x)| h.iter().zip(x).map(|(a, b)| a + b).collect()).collect())
}

/// Runs a layer keeping per-step caches. Inputs are assumed shape-checked.
pub(crate) fn layer_steps<'a>(p: &GruLayerParams, inputs: impl Iterator<Item = StepInput<'a>>) -> Vec<GruStep> {
    let mut steps: Vec<GruStep> = Vec::new();
    let zero = vec![0.0; p.hidden_dim()];
    for x in inputs {
        let h_prev = steps.last().map_or(zero.as_slice(), |s| s.h.as_slice());
        let s = step(p, x, h_prev);
        steps.push(s);
    }
    steps
}

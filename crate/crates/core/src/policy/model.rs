//! Stacked GRU over one-hot characters with a linear readout.
//!
//! Parameters live in one flat vector. Every weight matrix is stored one row per
//! *input* unit so the forward pass is a sequence of contiguous axpy updates and
//! the backward pass a sequence of dot products.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Vocab;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layers: usize,
    pub hidden: usize,
    pub context_length: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            layers: 2,
            hidden: 128,
            context_length: 512,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.context_length < 2 {
            return Err(Error::InvalidArchitecture(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerOffsets {
    pub w_in: usize,
    pub b_in: usize,
    pub w_hh: usize,
    pub b_hh: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub hidden: usize,
    pub layers: Vec<LayerOffsets>,
    pub w_out: usize,
    pub b_out: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &Architecture) -> Layout {
        let h = arch.hidden;
        let g = 3 * h;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(arch.layers);
        for l in 0..arch.layers {
            let in_dim = if l == 0 { Vocab::SIZE } else { h };
            let w_in = offset;
            let b_in = w_in + in_dim * g;
            let w_hh = b_in + g;
            let b_hh = w_hh + h * g;
            offset = b_hh + g;
            layers.push(LayerOffsets {
                w_in,
                b_in,
                w_hh,
                b_hh,
            });
        }
        let w_out = offset;
        let b_out = w_out + h * Vocab::SIZE;
        Layout {
            hidden: h,
            layers,
            w_out,
            b_out,
            total: b_out + Vocab::SIZE,
        }
    }
}

/// A node's policy: architecture, parameters, and Adam moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub arch: Architecture,
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step: u64,
}

impl PolicyState {
    /// Uniform initialization in `±1/sqrt(hidden)` for recurrent and readout
    /// weights, `±0.5` for the input embedding rows; zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<PolicyState> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut rng = seed::rng(seed, &[seed::tag::INIT]);
        let mut params = vec![0.0; layout.total];
        let k = 1.0 / (arch.hidden as f64).sqrt();
        for (l, off) in layout.layers.iter().enumerate() {
            let scale = if l == 0 { 0.5 } else { k };
            for p in &mut params[off.w_in..off.b_in] {
                *p = rng.gen_range(-scale..scale);
            }
            for p in &mut params[off.w_hh..off.b_hh] {
                *p = rng.gen_range(-k..k);
            }
        }
        for p in &mut params[layout.w_out..layout.b_out] {
            *p = rng.gen_range(-k..k);
        }
        Ok(PolicyState::from_params(arch, params))
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> PolicyState {
        let n = params.len();
        PolicyState {
            arch,
            params,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn zeros(arch: Architecture) -> Result<PolicyState> {
        arch.validate()?;
        Ok(PolicyState::from_params(arch, vec![0.0; arch.param_count()]))
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let n = self.arch.param_count();
        if self.params.len() != n || self.adam_m.len() != n || self.adam_v.len() != n {
            return Err(Error::InvalidArchitecture(format!(
                "expected {n} parameters and moments, found {}/{}/{}",
                self.params.len(),
                self.adam_m.len(),
                self.adam_v.len()
            )));
        }
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        Ok(())
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.arch)
    }
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) enum Input<'a> {
    Token(u32),
    Dense(&'a [f64]),
}

/// Saved activations of one GRU cell application: `[h | r | z | n | gh_n]`,
/// each block `hidden` wide.
pub(crate) const CACHE_BLOCKS: usize = 5;

/// One GRU step. `cache` receives the new hidden state and the gate values the
/// backward pass needs; `scratch` must hold `6 * hidden` values.
pub(crate) fn gru_step(
    params: &[f64],
    off: &LayerOffsets,
    h: usize,
    input: Input<'_>,
    h_prev: Option<&[f64]>,
    cache: &mut [f64],
    scratch: &mut [f64],
) {
    let g = 3 * h;
    let (gi, gh) = scratch[..2 * g].split_at_mut(g);
    gi.copy_from_slice(&params[off.b_in..off.b_in + g]);
    match input {
        Input::Token(t) => {
            let row = off.w_in + t as usize * g;
            axpy(gi, 1.0, &params[row..row + g]);
        }
        Input::Dense(x) => {
            for (j, &xj) in x.iter().enumerate() {
                let row = off.w_in + j * g;
                axpy(gi, xj, &params[row..row + g]);
            }
        }
    }
    gh.copy_from_slice(&params[off.b_hh..off.b_hh + g]);
    if let Some(hp) = h_prev {
        for (j, &hj) in hp.iter().enumerate() {
            let row = off.w_hh + j * g;
            axpy(gh, hj, &params[row..row + g]);
        }
    }
    let (hc, rest) = cache.split_at_mut(h);
    let (rc, rest) = rest.split_at_mut(h);
    let (zc, rest) = rest.split_at_mut(h);
    let (nc, ghn) = rest.split_at_mut(h);
    for i in 0..h {
        let r = sigmoid(gi[i] + gh[i]);
        let z = sigmoid(gi[h + i] + gh[h + i]);
        let n = (gi[2 * h + i] + r * gh[2 * h + i]).tanh();
        let prev = h_prev.map_or(0.0, |hp| hp[i]);
        rc[i] = r;
        zc[i] = z;
        nc[i] = n;
        ghn[i] = gh[2 * h + i];
        hc[i] = (1.0 - z) * n + z * prev;
    }
}

/// Backward through one GRU step. Accumulates parameter gradients into `grad`,
/// the gradient wrt the previous hidden state into `dh_prev` (when there is
/// one), and wrt a dense input into `dx`. `scratch` must hold `6 * hidden`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gru_backward(
    params: &[f64],
    off: &LayerOffsets,
    h: usize,
    input: Input<'_>,
    h_prev: Option<&[f64]>,
    cache: &[f64],
    dh: &[f64],
    grad: &mut [f64],
    dh_prev: Option<&mut [f64]>,
    dx: Option<&mut [f64]>,
    scratch: &mut [f64],
) {
    let g = 3 * h;
    let (dgi, dgh) = scratch[..2 * g].split_at_mut(g);
    let rc = &cache[h..2 * h];
    let zc = &cache[2 * h..3 * h];
    let nc = &cache[3 * h..4 * h];
    let ghn = &cache[4 * h..5 * h];
    for i in 0..h {
        let (r, z, n) = (rc[i], zc[i], nc[i]);
        let prev = h_prev.map_or(0.0, |hp| hp[i]);
        let dn = dh[i] * (1.0 - z);
        let dz = dh[i] * (prev - n);
        let dn_pre = dn * (1.0 - n * n);
        let dr = dn_pre * ghn[i];
        let dr_pre = dr * r * (1.0 - r);
        let dz_pre = dz * z * (1.0 - z);
        dgi[i] = dr_pre;
        dgi[h + i] = dz_pre;
        dgi[2 * h + i] = dn_pre;
        dgh[i] = dr_pre;
        dgh[h + i] = dz_pre;
        dgh[2 * h + i] = dn_pre * r;
    }
    axpy(&mut grad[off.b_in..off.b_in + g], 1.0, dgi);
    axpy(&mut grad[off.b_hh..off.b_hh + g], 1.0, dgh);
    match input {
        Input::Token(t) => {
            let row = off.w_in + t as usize * g;
            axpy(&mut grad[row..row + g], 1.0, dgi);
        }
        Input::Dense(x) => {
            let dx = dx.expect("dense input needs a dx buffer");
            for (j, &xj) in x.iter().enumerate() {
                let row = off.w_in + j * g;
                axpy(&mut grad[row..row + g], xj, dgi);
                dx[j] += dot(&params[row..row + g], dgi);
            }
        }
    }
    if let Some(hp) = h_prev {
        let dh_prev = dh_prev.expect("previous state needs a gradient buffer");
        for j in 0..h {
            let row = off.w_hh + j * g;
            axpy(&mut grad[row..row + g], hp[j], dgh);
            dh_prev[j] += dot(&params[row..row + g], dgh) + dh[j] * zc[j];
        }
    }
}

/// `logits = b_out + W_out^T h`.
pub(crate) fn readout(params: &[f64], layout: &Layout, h: &[f64], logits: &mut [f64]) {
    let v = Vocab::SIZE;
    logits.copy_from_slice(&params[layout.b_out..layout.b_out + v]);
    for (j, &hj) in h.iter().enumerate() {
        let row = layout.w_out + j * v;
        axpy(logits, hj, &params[row..row + v]);
    }
}

pub(crate) fn readout_backward(
    params: &[f64],
    layout: &Layout,
    h: &[f64],
    dlogits: &[f64],
    grad: &mut [f64],
    dh: &mut [f64],
) {
    let v = Vocab::SIZE;
    axpy(&mut grad[layout.b_out..layout.b_out + v], 1.0, dlogits);
    for (j, &hj) in h.iter().enumerate() {
        let row = layout.w_out + j * v;
        axpy(&mut grad[row..row + v], hj, dlogits);
        dh[j] += dot(&params[row..row + v], dlogits);
    }
}

/// In-place log-softmax.
pub(crate) fn log_softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&x| (x - max).exp()).sum();
    let lse = max + sum.ln();
    for x in logits.iter_mut() {
        *x -= lse;
    }
}

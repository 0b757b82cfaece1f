//! Forward and backward kernels for the network primitives.
//!
//! Kernels operate on raw parameter slices; shape bookkeeping and tape
//! management live in the network executor. Backward kernels accumulate into
//! the provided gradient buffers (`None` skips a frozen parameter) and return
//! the gradient with respect to the input.

// The kernels coordinate lagged positions across several parallel buffers;
// a uniform indexed style reads better than iterators mid-stencil.
#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use crate::scalar::{c, Scalar};

use super::tensor::Tensor;

/// Elementwise activation functions exposed to network configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > F::zero() {
                    x
                } else {
                    F::zero()
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative computed from the activation *output*. Valid for all three
    /// variants: tanh' = 1 - y², relu' = [y > 0], identity' = 1.
    #[inline]
    pub fn grad_from_output<F: Scalar>(self, y: F) -> F {
        match self {
            Activation::Tanh => F::one() - y * y,
            Activation::Relu => {
                if y > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Identity => F::one(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

// ---------------------------------------------------------------------------
// Dense (affine) layer: y = W x + b on a flat vector.
// ---------------------------------------------------------------------------

pub fn dense_forward<F: Scalar>(
    weight: &[F],
    bias: &[F],
    out_dim: usize,
    in_dim: usize,
    x: &[F],
) -> Vec<F> {
    debug_assert_eq!(weight.len(), out_dim * in_dim);
    debug_assert_eq!(bias.len(), out_dim);
    debug_assert_eq!(x.len(), in_dim);
    let mut y = vec![F::zero(); out_dim];
    for o in 0..out_dim {
        let row = &weight[o * in_dim..(o + 1) * in_dim];
        let mut acc = bias[o];
        for i in 0..in_dim {
            acc += row[i] * x[i];
        }
        y[o] = acc;
    }
    y
}

pub fn dense_backward<F: Scalar>(
    weight: &[F],
    out_dim: usize,
    in_dim: usize,
    x: &[F],
    grad_out: &[F],
    mut grad_weight: Option<&mut [F]>,
    mut grad_bias: Option<&mut [F]>,
) -> Vec<F> {
    debug_assert_eq!(grad_out.len(), out_dim);
    let mut grad_input = vec![F::zero(); in_dim];
    for o in 0..out_dim {
        let g = grad_out[o];
        if let Some(gb) = grad_bias.as_deref_mut() {
            gb[o] += g;
        }
        let row = &weight[o * in_dim..(o + 1) * in_dim];
        if let Some(gw) = grad_weight.as_deref_mut() {
            let grow = &mut gw[o * in_dim..(o + 1) * in_dim];
            for i in 0..in_dim {
                grow[i] += g * x[i];
            }
        }
        for i in 0..in_dim {
            grad_input[i] += g * row[i];
        }
    }
    grad_input
}

// ---------------------------------------------------------------------------
// 1-D convolution with causal (left-zero) padding and dilation.
// Weight layout: [filters][in_channels][kernel], tap j = k-1 touching the
// current step, so y[f][t] depends on x[., t], x[., t-d], ..., x[., t-(k-1)d].
// Output length equals input length.
// ---------------------------------------------------------------------------

pub fn conv1d_forward<F: Scalar>(
    input: &Tensor<F>,
    weight: &[F],
    bias: &[F],
    filters: usize,
    kernel: usize,
    dilation: usize,
) -> Tensor<F> {
    let in_ch = input.channels();
    let time = input.time();
    debug_assert_eq!(weight.len(), filters * in_ch * kernel);
    debug_assert_eq!(bias.len(), filters);
    let mut out = Tensor::zeros(filters, time);
    for f in 0..filters {
        for t in 0..time {
            let mut acc = bias[f];
            for ci in 0..in_ch {
                let base = (f * in_ch + ci) * kernel;
                let x = input.channel(ci);
                for j in 0..kernel {
                    let lag = (kernel - 1 - j) * dilation;
                    if lag <= t {
                        acc += weight[base + j] * x[t - lag];
                    }
                }
            }
            *out.at_mut(f, t) = acc;
        }
    }
    out
}

// Every argument routes one gradient destination; bundling them into a
// struct would only move the list somewhere else.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &[F],
    filters: usize,
    kernel: usize,
    dilation: usize,
    grad_out: &Tensor<F>,
    mut grad_weight: Option<&mut [F]>,
    mut grad_bias: Option<&mut [F]>,
) -> Tensor<F> {
    let in_ch = input.channels();
    let time = input.time();
    debug_assert_eq!(grad_out.channels(), filters);
    debug_assert_eq!(grad_out.time(), time);
    let mut grad_input = Tensor::zeros(in_ch, time);
    for f in 0..filters {
        let gy = grad_out.channel(f);
        if let Some(gb) = grad_bias.as_deref_mut() {
            gb[f] += gy.iter().fold(F::zero(), |acc, &g| acc + g);
        }
        for ci in 0..in_ch {
            let base = (f * in_ch + ci) * kernel;
            let x = input.channel(ci);
            for j in 0..kernel {
                let lag = (kernel - 1 - j) * dilation;
                if let Some(gw) = grad_weight.as_deref_mut() {
                    let mut acc = F::zero();
                    for t in lag..time {
                        acc += gy[t] * x[t - lag];
                    }
                    gw[base + j] += acc;
                }
                let w = weight[base + j];
                let gx = grad_input.data_mut();
                for t in lag..time {
                    gx[ci * time + (t - lag)] += gy[t] * w;
                }
            }
        }
    }
    grad_input
}

// ---------------------------------------------------------------------------
// Width-2, stride-2 max pooling over the time axis. Odd trailing step is
// dropped. Ties route the gradient to the earlier step.
// ---------------------------------------------------------------------------

pub fn max_pool2_forward<F: Scalar>(input: &Tensor<F>) -> (Tensor<F>, Vec<usize>) {
    let channels = input.channels();
    let out_time = input.time() / 2;
    let mut out = Tensor::zeros(channels, out_time);
    let mut argmax = vec![0usize; channels * out_time];
    for ch in 0..channels {
        let x = input.channel(ch);
        for t in 0..out_time {
            let (a, b) = (x[2 * t], x[2 * t + 1]);
            let (val, idx) = if b > a { (b, 2 * t + 1) } else { (a, 2 * t) };
            *out.at_mut(ch, t) = val;
            argmax[ch * out_time + t] = ch * input.time() + idx;
        }
    }
    (out, argmax)
}

pub fn max_pool2_backward<F: Scalar>(
    grad_out: &Tensor<F>,
    argmax: &[usize],
    in_channels: usize,
    in_time: usize,
) -> Tensor<F> {
    let mut grad_input = Tensor::zeros(in_channels, in_time);
    let gx = grad_input.data_mut();
    for (flat, &src) in argmax.iter().enumerate() {
        gx[src] += grad_out.data()[flat];
    }
    grad_input
}

// ---------------------------------------------------------------------------
// Batch normalization, inference form: normalize per channel with running
// statistics; gamma/beta affine. Running statistics are updated separately
// (EMA over per-sample time-axis statistics) and treated as constants by the
// backward rule.
// ---------------------------------------------------------------------------

/// Returns `(output, xhat)` where `xhat` is the normalized pre-affine value
/// saved for the gamma gradient.
pub fn batch_norm_forward<F: Scalar>(
    input: &Tensor<F>,
    gamma: &[F],
    beta: &[F],
    running_mean: &[F],
    running_var: &[F],
    eps: f64,
) -> (Tensor<F>, Tensor<F>) {
    let channels = input.channels();
    let time = input.time();
    let mut out = Tensor::zeros(channels, time);
    let mut xhat = Tensor::zeros(channels, time);
    let eps: F = c(eps);
    for ch in 0..channels {
        let inv_std = F::one() / (running_var[ch] + eps).sqrt();
        let x = input.channel(ch);
        for t in 0..time {
            let n = (x[t] - running_mean[ch]) * inv_std;
            *xhat.at_mut(ch, t) = n;
            *out.at_mut(ch, t) = gamma[ch] * n + beta[ch];
        }
    }
    (out, xhat)
}

/// EMA update of running statistics from this sample's per-channel mean and
/// population variance over the time axis.
pub fn batch_norm_update_stats<F: Scalar>(
    input: &Tensor<F>,
    running_mean: &mut [F],
    running_var: &mut [F],
    momentum: f64,
) {
    let channels = input.channels();
    let time = input.time();
    if time == 0 {
        return;
    }
    let momentum: F = c(momentum);
    let keep = F::one() - momentum;
    let n: F = c(time as f64);
    for ch in 0..channels {
        let x = input.channel(ch);
        let mean = x.iter().fold(F::zero(), |acc, &v| acc + v) / n;
        let var = x.iter().fold(F::zero(), |acc, &v| {
            let d = v - mean;
            acc + d * d
        }) / n;
        running_mean[ch] = momentum * running_mean[ch] + keep * mean;
        running_var[ch] = momentum * running_var[ch] + keep * var;
    }
}

pub fn batch_norm_backward<F: Scalar>(
    grad_out: &Tensor<F>,
    xhat: &Tensor<F>,
    gamma: &[F],
    running_var: &[F],
    eps: f64,
    mut grad_gamma: Option<&mut [F]>,
    mut grad_beta: Option<&mut [F]>,
) -> Tensor<F> {
    let channels = grad_out.channels();
    let time = grad_out.time();
    let mut grad_input = Tensor::zeros(channels, time);
    let eps: F = c(eps);
    for ch in 0..channels {
        let inv_std = F::one() / (running_var[ch] + eps).sqrt();
        let gy = grad_out.channel(ch);
        let xh = xhat.channel(ch);
        let mut sum_gy = F::zero();
        let mut sum_gy_xhat = F::zero();
        for t in 0..time {
            sum_gy += gy[t];
            sum_gy_xhat += gy[t] * xh[t];
            *grad_input.at_mut(ch, t) = gy[t] * gamma[ch] * inv_std;
        }
        if let Some(gg) = grad_gamma.as_deref_mut() {
            gg[ch] += sum_gy_xhat;
        }
        if let Some(gb) = grad_beta.as_deref_mut() {
            gb[ch] += sum_gy;
        }
    }
    grad_input
}

// ---------------------------------------------------------------------------
// LSTM over a full sequence. Parameter layout groups the four gates by rows
// in order [input, forget, candidate, output]: kernel [4u x in_dim],
// recurrent [4u x u], bias [4u]. The candidate activation is also applied to
// the cell state on output (h = o * act(c)). Output is the full hidden
// sequence [units, time]; `sequence-last` handles return_sequences = false.
// ---------------------------------------------------------------------------

/// Per-step values saved during the forward pass for backpropagation through
/// time. `hs`/`cs` hold `time + 1` entries including the zero initial state.
#[derive(Debug, Clone, Default)]
pub struct LstmTrace<F: Scalar> {
    pub hs: Vec<Vec<F>>,
    pub cs: Vec<Vec<F>>,
    pub gate_i: Vec<Vec<F>>,
    pub gate_f: Vec<Vec<F>>,
    pub gate_g: Vec<Vec<F>>,
    pub gate_o: Vec<Vec<F>>,
    pub act_c: Vec<Vec<F>>,
}

pub fn lstm_forward<F: Scalar>(
    input: &Tensor<F>,
    kernel: &[F],
    recurrent: &[F],
    bias: &[F],
    units: usize,
    activation: Activation,
    mut trace: Option<&mut LstmTrace<F>>,
) -> Tensor<F> {
    let in_dim = input.channels();
    let time = input.time();
    debug_assert_eq!(kernel.len(), 4 * units * in_dim);
    debug_assert_eq!(recurrent.len(), 4 * units * units);
    debug_assert_eq!(bias.len(), 4 * units);

    let mut out = Tensor::zeros(units, time);
    let mut h = vec![F::zero(); units];
    let mut cstate = vec![F::zero(); units];
    if let Some(tr) = trace.as_deref_mut() {
        *tr = LstmTrace::default();
        tr.hs.push(h.clone());
        tr.cs.push(cstate.clone());
    }

    let mut z = vec![F::zero(); 4 * units];
    for t in 0..time {
        let x_t = input.step(t);
        for (r, zr) in z.iter_mut().enumerate() {
            let mut acc = bias[r];
            let krow = &kernel[r * in_dim..(r + 1) * in_dim];
            for (ci, &xv) in x_t.iter().enumerate() {
                acc += krow[ci] * xv;
            }
            let urow = &recurrent[r * units..(r + 1) * units];
            for (j, &hv) in h.iter().enumerate() {
                acc += urow[j] * hv;
            }
            *zr = acc;
        }
        let mut gi = vec![F::zero(); units];
        let mut gf = vec![F::zero(); units];
        let mut gg = vec![F::zero(); units];
        let mut go = vec![F::zero(); units];
        let mut ac = vec![F::zero(); units];
        for u in 0..units {
            gi[u] = sigmoid(z[u]);
            gf[u] = sigmoid(z[units + u]);
            gg[u] = activation.apply(z[2 * units + u]);
            go[u] = sigmoid(z[3 * units + u]);
            cstate[u] = gf[u] * cstate[u] + gi[u] * gg[u];
            ac[u] = activation.apply(cstate[u]);
            h[u] = go[u] * ac[u];
            *out.at_mut(u, t) = h[u];
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.hs.push(h.clone());
            tr.cs.push(cstate.clone());
            tr.gate_i.push(gi);
            tr.gate_f.push(gf);
            tr.gate_g.push(gg);
            tr.gate_o.push(go);
            tr.act_c.push(ac);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn lstm_backward<F: Scalar>(
    input: &Tensor<F>,
    kernel: &[F],
    recurrent: &[F],
    units: usize,
    activation: Activation,
    trace: &LstmTrace<F>,
    grad_out: &Tensor<F>,
    mut grad_kernel: Option<&mut [F]>,
    mut grad_recurrent: Option<&mut [F]>,
    mut grad_bias: Option<&mut [F]>,
) -> Tensor<F> {
    let in_dim = input.channels();
    let time = input.time();
    let mut grad_input = Tensor::zeros(in_dim, time);
    let mut dh_next = vec![F::zero(); units];
    let mut dc_next = vec![F::zero(); units];
    let mut dz = vec![F::zero(); 4 * units];

    for t in (0..time).rev() {
        let gi = &trace.gate_i[t];
        let gf = &trace.gate_f[t];
        let gg = &trace.gate_g[t];
        let go = &trace.gate_o[t];
        let ac = &trace.act_c[t];
        let c_prev = &trace.cs[t];
        let h_prev = &trace.hs[t];
        let x_t = input.step(t);

        for u in 0..units {
            let dh = grad_out.at(u, t) + dh_next[u];
            let d_o = dh * ac[u];
            let dc = dh * go[u] * activation.grad_from_output(ac[u]) + dc_next[u];
            let d_f = dc * c_prev[u];
            let d_i = dc * gg[u];
            let d_g = dc * gi[u];
            dz[u] = d_i * gi[u] * (F::one() - gi[u]);
            dz[units + u] = d_f * gf[u] * (F::one() - gf[u]);
            dz[2 * units + u] = d_g * activation.grad_from_output(gg[u]);
            dz[3 * units + u] = d_o * go[u] * (F::one() - go[u]);
            dc_next[u] = dc * gf[u];
        }

        for u in dh_next.iter_mut() {
            *u = F::zero();
        }
        for (r, &dzr) in dz.iter().enumerate() {
            if let Some(gb) = grad_bias.as_deref_mut() {
                gb[r] += dzr;
            }
            if let Some(gk) = grad_kernel.as_deref_mut() {
                let row = &mut gk[r * in_dim..(r + 1) * in_dim];
                for (ci, &xv) in x_t.iter().enumerate() {
                    row[ci] += dzr * xv;
                }
            }
            if let Some(gr) = grad_recurrent.as_deref_mut() {
                let row = &mut gr[r * units..(r + 1) * units];
                for (j, &hv) in h_prev.iter().enumerate() {
                    row[j] += dzr * hv;
                }
            }
            let krow = &kernel[r * in_dim..(r + 1) * in_dim];
            for ci in 0..in_dim {
                *grad_input.at_mut(ci, t) += dzr * krow[ci];
            }
            let urow = &recurrent[r * units..(r + 1) * units];
            for (dh, &uv) in dh_next.iter_mut().zip(urow) {
                *dh += dzr * uv;
            }
        }
    }
    grad_input
}

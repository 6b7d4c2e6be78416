//! Forward and backward passes of the individual layers.
//!
//! Convolution windows are contiguous in the row-major input: the `kW`
//! frames starting at `t * dW` occupy `kW * d_in` consecutive values, so
//! filter `o` is a dot product of weight row `o` with that slice.

use crate::error::{structural, Result};
use crate::tensor::Tensor2;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Output frames of a sliding window of width `kw`, shift `step`, over `frames`.
pub fn window_count(frames: usize, kw: usize, step: usize) -> Option<usize> {
    (frames >= kw && kw > 0 && step > 0).then(|| (frames - kw) / step + 1)
}

fn check_conv(input: &Tensor2, weights: &Tensor2, bias: &[f64], kw: usize, dw: usize) -> Result<usize> {
    let frames = window_count(input.frames(), kw, dw).ok_or_else(|| {
        structural(format!("convolution of width {kw} (shift {dw}) needs at least {kw} frames, got {}", input.frames()))
    })?;
    if weights.channels() != kw * input.channels() {
        return Err(structural(format!(
            "weights have {} columns, expected kW*d_in = {}",
            weights.channels(),
            kw * input.channels()
        )));
    }
    if bias.len() != weights.frames() {
        return Err(structural(format!("bias has {} entries for {} filters", bias.len(), weights.frames())));
    }
    Ok(frames)
}

/// Applies the `d_out x (kW * d_in)` matrix `weights` to every window of `kw`
/// frames, windows spaced `dw` frames apart.
pub fn conv_forward(input: &Tensor2, weights: &Tensor2, bias: &[f64], kw: usize, dw: usize) -> Result<Tensor2> {
    let frames = check_conv(input, weights, bias, kw, dw)?;
    let span = kw * input.channels();
    let d_out = weights.frames();
    let x = input.as_slice();
    let mut out = Tensor2::zeros(frames, d_out);
    for t in 0..frames {
        let start = t * dw * input.channels();
        let window = &x[start..start + span];
        for (o, y) in out.row_mut(t).iter_mut().enumerate() {
            *y = bias[o] + dot(weights.row(o), window);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor2,
    pub weights: Tensor2,
    pub bias: Vec<f64>,
}

/// Gradients of `conv_forward` given the gradient of its output.
pub fn conv_backward(
    input: &Tensor2,
    weights: &Tensor2,
    kw: usize,
    dw: usize,
    grad_out: &Tensor2,
) -> Result<ConvGrads> {
    let (w, b, gi) = conv_backward_impl(input, weights, kw, dw, grad_out, true)?;
    Ok(ConvGrads { input: gi.expect("requested"), weights: w, bias: b })
}

/// As [`conv_backward`], skipping the input gradient unless `want_input`.
pub(crate) fn conv_backward_impl(
    input: &Tensor2,
    weights: &Tensor2,
    kw: usize,
    dw: usize,
    grad_out: &Tensor2,
    want_input: bool,
) -> Result<(Tensor2, Vec<f64>, Option<Tensor2>)> {
    let zero_bias = vec![0.0; weights.frames()];
    let frames = check_conv(input, weights, &zero_bias, kw, dw)?;
    if grad_out.shape() != (frames, weights.frames()) {
        return Err(structural(format!(
            "output gradient shaped {:?}, expected {:?}",
            grad_out.shape(),
            (frames, weights.frames())
        )));
    }
    let d_in = input.channels();
    let span = kw * d_in;
    let x = input.as_slice();
    let mut gw = Tensor2::zeros(weights.frames(), weights.channels());
    let mut gb = vec![0.0; weights.frames()];
    let mut gi = want_input.then(|| Tensor2::zeros(input.frames(), d_in));
    for t in 0..frames {
        let start = t * dw * d_in;
        let window = &x[start..start + span];
        for (o, &g) in grad_out.row(t).iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            gb[o] += g;
            axpy(g, window, gw.row_mut(o));
            if let Some(gi) = gi.as_mut() {
                axpy(g, weights.row(o), &mut gi.as_mut_slice()[start..start + span]);
            }
        }
    }
    Ok((gw, gb, gi))
}

/// Per-channel max over windows `[t*stride, t*stride + kw)`.
///
/// Returns the pooled tensor and, for each output `(t, d)` in row-major order,
/// the input frame holding the maximum (smallest index on ties).
pub fn maxpool_forward(input: &Tensor2, kw: usize, stride: usize) -> Result<(Tensor2, Vec<usize>)> {
    let frames = window_count(input.frames(), kw, stride).ok_or_else(|| {
        structural(format!("max-pooling of width {kw} needs at least {kw} frames, got {}", input.frames()))
    })?;
    let d = input.channels();
    let mut out = Tensor2::zeros(frames, d);
    let mut argmax = vec![0usize; frames * d];
    for t in 0..frames {
        let first = t * stride;
        let (row, idx) = (out.row_mut(t), &mut argmax[t * d..(t + 1) * d]);
        row.copy_from_slice(input.row(first));
        idx.iter_mut().for_each(|i| *i = first);
        for s in first + 1..first + kw {
            for (c, &v) in input.row(s).iter().enumerate() {
                if v > row[c] {
                    row[c] = v;
                    idx[c] = s;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each output gradient back to its recorded argmax frame,
/// accumulating where overlapping windows share a maximum.
pub fn maxpool_backward(argmax: &[usize], grad_out: &Tensor2, input_frames: usize) -> Result<Tensor2> {
    let d = grad_out.channels();
    if argmax.len() != grad_out.frames() * d {
        return Err(structural(format!(
            "{} argmax entries for a {:?} output gradient",
            argmax.len(),
            grad_out.shape()
        )));
    }
    let mut gi = Tensor2::zeros(input_frames, d);
    for (k, (&src, &g)) in argmax.iter().zip(grad_out.as_slice()).enumerate() {
        if src >= input_frames {
            return Err(structural(format!("argmax frame {src} outside input of {input_frames} frames")));
        }
        let c = k % d;
        let slot = &mut gi.as_mut_slice()[src * d + c];
        *slot += g;
    }
    Ok(gi)
}

pub fn tanh_forward(input: &Tensor2) -> Tensor2 {
    let mut out = input.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
    out
}

/// `grad_in = grad_out * (1 - output^2)`, taking the forward *output*.
pub fn tanh_backward(output: &Tensor2, grad_out: &Tensor2) -> Result<Tensor2> {
    if output.shape() != grad_out.shape() {
        return Err(structural("tanh gradient shape differs from its output"));
    }
    let mut gi = grad_out.clone();
    tanh_backward_in_place(output.as_slice(), gi.as_mut_slice());
    Ok(gi)
}

pub(crate) fn tanh_backward_in_place(output: &[f64], grad: &mut [f64]) {
    for (g, y) in grad.iter_mut().zip(output) {
        *g *= 1.0 - y * y;
    }
}

/// `W x + b` for a weight matrix with one row per output.
pub fn linear_forward(x: &[f64], weights: &Tensor2, bias: &[f64]) -> Result<Vec<f64>> {
    if weights.channels() != x.len() || bias.len() != weights.frames() {
        return Err(structural(format!(
            "linear layer {:?} with {} biases cannot take a {}-dim input",
            weights.shape(),
            bias.len(),
            x.len()
        )));
    }
    Ok(weights.rows().zip(bias).map(|(w, b)| b + dot(w, x)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub input: Vec<f64>,
    pub weights: Tensor2,
    pub bias: Vec<f64>,
}

pub fn linear_backward(x: &[f64], weights: &Tensor2, grad_out: &[f64]) -> Result<LinearGrads> {
    if weights.channels() != x.len() || grad_out.len() != weights.frames() {
        return Err(structural("linear gradient shapes inconsistent with weights"));
    }
    let mut gw = Tensor2::zeros(weights.frames(), weights.channels());
    let mut gx = vec![0.0; x.len()];
    for (o, &g) in grad_out.iter().enumerate() {
        axpy(g, x, gw.row_mut(o));
        axpy(g, weights.row(o), &mut gx);
    }
    Ok(LinearGrads { input: gx, weights: gw, bias: grad_out.to_vec() })
}

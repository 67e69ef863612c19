//! Finite-difference oracles for validating analytic gradients.
//!
//! Everything here estimates derivatives purely from loss evaluations
//! (forward passes), never from the backward pass, so it serves as an
//! independent second route when testing backpropagation and the
//! finite-difference regularizer gradient. Intended for small networks:
//! each estimate clones the parameters and runs a handful of forwards.

use crate::error::Result;
use crate::network::{cross_entropy_loss, forward, NetworkParams};
use crate::tensor::Vector;

/// Loss of the network on one labelled sample.
pub fn loss_at(params: &NetworkParams, d: &Vector, label: usize) -> Result<f64> {
    let trace = forward(params, d)?;
    Ok(cross_entropy_loss(trace.prediction.as_slice(), label))
}

/// Mixed absolute/relative discrepancy: |a-b| / max(|a|, |b|, floor).
/// With floor 1.0 this behaves as a relative check for O(1) quantities and
/// an absolute check near zero, which is what loss-scale gradient
/// comparisons need (the difference quotient itself carries ~1e-10 noise).
pub fn rel_error(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(floor);
    (a - b).abs() / scale
}

/// Central difference of the loss in one weight coordinate.
pub fn fd_weight_grad(
    params: &NetworkParams,
    d: &Vector,
    label: usize,
    layer: usize,
    r: usize,
    c: usize,
    h: f64,
) -> Result<f64> {
    let mut p = params.clone();
    let base = p.weights[layer][(r, c)];
    p.weights[layer][(r, c)] = base + h;
    let up = loss_at(&p, d, label)?;
    p.weights[layer][(r, c)] = base - h;
    let down = loss_at(&p, d, label)?;
    Ok((up - down) / (2.0 * h))
}

/// Central difference of the loss in one bias coordinate.
pub fn fd_bias_grad(
    params: &NetworkParams,
    d: &Vector,
    label: usize,
    layer: usize,
    i: usize,
    h: f64,
) -> Result<f64> {
    let mut p = params.clone();
    let base = p.biases[layer][i];
    p.biases[layer][i] = base + h;
    let up = loss_at(&p, d, label)?;
    p.biases[layer][i] = base - h;
    let down = loss_at(&p, d, label)?;
    Ok((up - down) / (2.0 * h))
}

/// Central difference of the loss in one input coordinate.
pub fn fd_data_grad(
    params: &NetworkParams,
    d: &Vector,
    label: usize,
    s: usize,
    h: f64,
) -> Result<f64> {
    let mut x = d.clone();
    let base = x[s];
    x[s] = base + h;
    let up = loss_at(params, &x, label)?;
    x[s] = base - h;
    let down = loss_at(params, &x, label)?;
    Ok((up - down) / (2.0 * h))
}

/// Mixed second derivative d²L / dW[layer][(r,c)] d d[s] by nested central
/// differences: the inner difference runs over the weight, the outer over
/// the input coordinate. Four loss evaluations.
#[allow(clippy::too_many_arguments)]
pub fn fd_mixed_partial(
    params: &NetworkParams,
    d: &Vector,
    label: usize,
    layer: usize,
    r: usize,
    c: usize,
    s: usize,
    h_weight: f64,
    h_data: f64,
) -> Result<f64> {
    let mut x = d.clone();
    let base = x[s];
    x[s] = base + h_data;
    let up = fd_weight_grad(params, &x, label, layer, r, c, h_weight)?;
    x[s] = base - h_data;
    let down = fd_weight_grad(params, &x, label, layer, r, c, h_weight)?;
    Ok((up - down) / (2.0 * h_data))
}

/// Same for a bias coordinate.
#[allow(clippy::too_many_arguments)]
pub fn fd_mixed_partial_bias(
    params: &NetworkParams,
    d: &Vector,
    label: usize,
    layer: usize,
    i: usize,
    s: usize,
    h_bias: f64,
    h_data: f64,
) -> Result<f64> {
    let mut x = d.clone();
    let base = x[s];
    x[s] = base + h_data;
    let up = fd_bias_grad(params, &x, label, layer, i, h_bias)?;
    x[s] = base - h_data;
    let down = fd_bias_grad(params, &x, label, layer, i, h_bias)?;
    Ok((up - down) / (2.0 * h_data))
}

/// Smallest |pre-activation| over all hidden units of a trace. Gradient
/// checks require this margin to stay above the perturbation size, otherwise
/// a ReLU kink sits inside the difference stencil and the comparison is
/// meaningless.
pub fn kink_margin(trace: &crate::network::ForwardTrace) -> f64 {
    let mut margin = f64::INFINITY;
    for h in &trace.preactivations[..trace.preactivations.len() - 1] {
        for &z in h.as_slice() {
            margin = margin.min(z.abs());
        }
    }
    margin
}

//! Penalty functions applied to the input gradient of the loss, their
//! gradients with respect to their own inputs, and the adversarial-example
//! construction built from them.
//!
//! With the L1 penalty the perturbation direction is the elementwise sign of
//! the input gradient, which is exactly the fast gradient sign construction;
//! the L2 penalty scales the gradient instead.

use crate::error::{Error, Result};
use crate::tensor::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    L1,
    L2,
}

impl std::fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegularizerKind::L1 => write!(f, "l1"),
            RegularizerKind::L2 => write!(f, "l2"),
        }
    }
}

impl std::str::FromStr for RegularizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<RegularizerKind> {
        match s {
            "l1" | "L1" => Ok(RegularizerKind::L1),
            "l2" | "L2" => Ok(RegularizerKind::L2),
            other => Err(Error::Config(format!("unknown regularizer kind '{other}'"))),
        }
    }
}

/// Penalty value: L1 is the absolute sum, L2 the squared norm.
pub fn reg_value(kind: RegularizerKind, x: &Vector) -> f64 {
    match kind {
        RegularizerKind::L1 => x.as_slice().iter().map(|v| v.abs()).sum(),
        RegularizerKind::L2 => x.as_slice().iter().map(|v| v * v).sum(),
    }
}

/// Sign with sign(0) = 0, returning exactly -1.0, 0.0, or 1.0.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// In-place form of `immediate_gradient`, for buffers that hold many
/// gradients at once.
pub(crate) fn immediate_gradient_in_place(kind: RegularizerKind, xs: &mut [f64]) {
    match kind {
        RegularizerKind::L1 => xs.iter_mut().for_each(|v| *v = sign(*v)),
        RegularizerKind::L2 => xs.iter_mut().for_each(|v| *v *= 2.0),
    }
}

/// Gradient of the penalty with respect to its own inputs:
/// L1 gives the elementwise sign (0 at 0), L2 gives 2x.
pub fn immediate_gradient(kind: RegularizerKind, x: &Vector) -> Vector {
    let mut out = x.clone();
    immediate_gradient_in_place(kind, out.as_mut_slice());
    out
}

/// The direction in which a small input change increases the penalized
/// quantity fastest: the immediate gradient evaluated at the input gradient
/// of the loss.
pub fn adversarial_direction(kind: RegularizerKind, data_gradient: &Vector) -> Vector {
    immediate_gradient(kind, data_gradient)
}

/// d + phi * y, elementwise. Deliberately unclipped: pixel values may leave
/// [0, 1], matching how the perturbed inputs are used everywhere else.
pub fn make_adversarial(d: &Vector, y: &Vector, phi: f64) -> Result<Vector> {
    if d.len() != y.len() {
        return Err(Error::shape(
            "make_adversarial",
            format!("input length {} vs direction length {}", d.len(), y.len()),
        ));
    }
    Ok(Vector::from_vec(
        d.as_slice().iter().zip(y.as_slice()).map(|(di, yi)| di + phi * yi).collect(),
    ))
}

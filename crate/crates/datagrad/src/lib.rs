//! Training feed-forward rectifier networks so that their loss surface is
//! flat in input space, and measuring what that buys under adversarial
//! noise.
//!
//! The central idea: alongside the usual weight update from the task loss,
//! penalize the gradient of the loss with respect to the *input*. A model
//! whose loss barely moves when a pixel moves is a model an attacker has
//! to push much harder. The penalty's own weight gradient is approximated
//! by one extra forward/backward pass at a perturbed input, so each
//! training step costs roughly two plain steps:
//!
//! 1. backprop at the batch gives weight gradients ξ and the input
//!    gradient of the loss,
//! 2. the regularizer turns the input gradient into a direction y (its
//!    sign for an L1 penalty, twice itself for L2),
//! 3. backprop again at d + t·y gives ω, and (ω − ξ)/t estimates the
//!    penalty's weight gradient,
//! 4. update with λ₀ξ + λ₁(ω − ξ)/t, batch-averaged.
//!
//! The same machinery fuels the evaluation side: the perturbation that the
//! penalty anticipates is exactly the fast-gradient-sign attack, so
//! [`robustness`] builds adversarial test sets from any trained model's
//! input gradients and scores any other model on them.
//!
//! # Crate map
//!
//! - [`tensor`]: dense matrices and the few kernels everything runs on,
//!   with fixed accumulation orders so runs are bit-reproducible.
//! - [`network`]: the rectifier network itself; forward, softmax and
//!   cross-entropy, backprop for weight and input gradients.
//! - [`regularizer`]: the L1/L2 penalty menu, adversarial directions, and
//!   perturbed-input construction shared by training and attacks.
//! - [`train`]: SGD with the finite-difference penalty, epoch scheduling,
//!   and best-validation-epoch selection.
//! - [`multitask`]: the two-headed variant (digit task plus an auxiliary
//!   rotation task) with the penalty driven by the digit loss alone.
//! - [`data`]: IDX-format MNIST ingestion, normalization, splits,
//!   mini-batch plans, and rotation augmentation.
//! - [`checkpoint`]: compact binary snapshots of either architecture.
//! - [`robustness`]: attacker/defender sweeps and CSV reports.
//! - [`check`]: finite-difference oracles used by the test suite to vet
//!   every analytic gradient against an independent computation.
//!
//! Everything is deterministic given a seed: same config, same bits, on
//! checkpoints and reports alike.

pub mod check;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod multitask;
pub mod network;
pub mod regularizer;
pub mod robustness;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

// Every code block in the guide compiles and runs with the test suite, one
// module per chapter so a failure names its chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/multitask.md")]
    mod multitask {}
    #[doc = include_str!("../../../book/src/robustness.md")]
    mod robustness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

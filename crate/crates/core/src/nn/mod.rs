//! Hand-derived forward/backward layers, losses and the Adam optimizer.
//!
//! Every layer is generic over [`Scalar`] so the same code path runs in
//! `f32` for training and in `f64` for finite-difference gradient checks.

mod activation;
mod batchnorm;
mod conv;
pub mod gradcheck;
pub mod init;
mod linear;
mod loss;
mod optim;

pub use activation::{activation_backward, activation_forward, Activation, ActivationLayer};
pub use batchnorm::{BatchNorm2d, BN_EPS, BN_MOMENTUM};
pub use conv::{conv2d_backward, conv2d_forward, conv_out_dim, Conv2d, ConvGrads};
pub use linear::{linear_backward, linear_forward, Linear, LinearGrads};
pub use loss::{softmax, softmax_cross_entropy};
pub use optim::{Adam, AdamConfig, Parameter};

use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Whether batch statistics are computed (train) or running statistics used (eval).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A differentiable layer that caches what it needs from `forward` for `backward`.
///
/// `backward` accumulates parameter gradients (it never overwrites them), so
/// two branches that run through the same layer sum their contributions.
pub trait Layer<T: Scalar> {
    fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;
    fn params(&self) -> Vec<&Parameter<T>>;
    fn params_mut(&mut self) -> Vec<&mut Parameter<T>>;
}

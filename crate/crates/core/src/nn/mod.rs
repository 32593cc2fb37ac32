//! Tensor arithmetic, the layer kinds the lifter is built from, and a
//! finite-difference gradient checker.
//!
//! Every layer caches what its backward pass needs during `forward`, and
//! `backward` *accumulates* into parameter gradients. Callers zero
//! gradients between optimizer steps.

mod activation;
mod batch_norm;
mod dropout;
mod grad_check;
mod linear;
pub mod rng;
mod tensor;

pub use activation::{relu, sigmoid, swish, Relu, Swish};
pub use batch_norm::BatchNorm;

/// `(momentum, epsilon)` used when a config does not override them.
pub fn batch_norm_defaults() -> (f64, f64) {
    (batch_norm::DEFAULT_MOMENTUM, batch_norm::DEFAULT_EPS)
}
pub use dropout::Dropout;
pub use grad_check::{grad_check, grad_check_with, weighted_sum_loss, GradCheckReport};
pub use linear::Linear;
pub use tensor::Tensor;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerMode {
    Train,
    Eval,
}

/// A learnable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

pub trait Layer {
    /// Forward pass; caches activations needed by [`Layer::backward`].
    fn forward(&mut self, x: &Tensor, mode: LayerMode) -> Result<Tensor>;

    /// Given dL/d(output) of the most recent forward, accumulates parameter
    /// gradients and returns dL/d(input).
    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor>;

    /// Eval-mode forward that touches no state.
    fn infer(&self, x: &Tensor) -> Result<Tensor>;

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    /// While frozen, dropout reuses its cached mask instead of sampling.
    fn set_mask_frozen(&mut self, _frozen: bool) {}

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}

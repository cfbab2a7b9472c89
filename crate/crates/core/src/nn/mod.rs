//! Minimal differentiable layer set for height-1, channels-last tensors.
//!
//! Every layer caches what its backward pass needs during `forward` and
//! accumulates parameter gradients into its [`Param`]s on `backward`.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod param;
mod pool;
mod tensor;

pub use activation::{elu, elu_grad, softmax, softmax_rows, Elu};
pub use batchnorm::{BatchNorm, BN_EPSILON, BN_MOMENTUM};
pub use conv::{same_padding, Conv, ConvTranspose};
pub use dense::Dense;
pub use param::{glorot_uniform, Param};
pub use pool::AvgPool;
pub use tensor::Tensor4;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A differentiable layer with cached activations.
pub trait Layer {
    fn forward(&mut self, x: &Tensor4, mode: Mode) -> Result<Tensor4>;

    /// Returns the input gradient and accumulates parameter gradients.
    /// Fails when called before `forward`.
    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4>;

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

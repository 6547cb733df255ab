//! Minimal CPU tensor/layer engine with reverse-mode gradients, plus the
//! residual U-net built on it.

pub mod error;
pub mod init;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod tensor;
pub mod unet;
pub mod weights;

pub use error::{NnError, Result};
pub use tensor::Tensor4;
pub use unet::{UNetConfig, UNetModel};

/// Training-precision tensor.
pub type Tensor32 = Tensor4<f32>;
/// Gradient-check-precision tensor.
pub type Tensor64 = Tensor4<f64>;

//! Minimal neural-network building blocks with hand-written backward passes.
//!
//! Everything is generic over [`Scalar`] so the same code trains in `f32` and
//! is gradient-checked in `f64`. Convolutional activations use a
//! channel-major `[C, N, H, W]` layout, which turns every convolution into a
//! single GEMM over the whole batch.

mod activation;
mod adam;
mod conv;
mod linear;
mod param;
mod scalar;

pub use activation::{relu_backward, relu_inplace, silu, silu_backward};
pub use adam::{Adam, AdamConfig};
pub use conv::{Conv2d, ConvTranspose2d, FeatureMaps};
pub use linear::{Linear, Matrix};
pub use param::Param;
pub use scalar::{matmul, Scalar};

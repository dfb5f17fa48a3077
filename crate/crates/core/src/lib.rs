//! Segment-based audio classification workbench.
//!
//! The pipeline follows the classic audio-tagging recipe: audio clips are cut
//! into non-overlapping 1-second segments, each segment is turned into a
//! 64-band log-mel feature matrix, a classifier scores every segment, and
//! sample-level scores are the mean of the segment scores. On top of that the
//! crate provides a declarative model-description layer ([`modelspec`]) with
//! shape inference and exact trainable-parameter counting, a small dense
//! tensor engine with reverse-mode gradients ([`tensor`]), an Adam-based
//! training loop ([`train`]) and prevalence-weighted AUC evaluation
//! ([`eval`]).
//!
//! All numeric kernels are generic over the scalar type through the
//! [`Scalar`] trait; `f32` and `f64` are supported, with `f64` being the
//! reference precision for gradient checking.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod manifest;
pub mod modelspec;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision tensor.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision tensor, used wherever gradients are verified.
pub type Tensor64 = tensor::Tensor<f64>;
/// Single-precision network.
pub type Network32 = tensor::Network<f32>;
/// Double-precision network.
pub type Network64 = tensor::Network<f64>;

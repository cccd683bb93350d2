//! Language-instructed 3D segmentation on point clouds.
//!
//! A small autoregressive LM emits a `<SEG>` token whose last-layer hidden
//! state, projected by an MLP, becomes the query of a cross-attention
//! decoder over pooled superpoint features; the decoder's logits form an
//! instance mask. Everything is trained jointly on synthetic scenes with a
//! combined language-modeling and mask (BCE + Dice) loss.

pub mod encoder;
pub mod error;
pub mod fusion;
pub mod language;
pub mod maskdecoder;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod pointcloud;

pub use error::{Error, Result};

/// Default training scalar. The numerics core is generic over [`numerics::Real`];
/// the pipeline instantiates it at 64-bit precision.
pub type Tensor = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;

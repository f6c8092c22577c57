//! Sparse 1D convolutional classifiers over many auxiliary time-series
//! channels: layers with exact gradients, the model ladder from fixed
//! features to VGG-style networks, group-sparse training, synthetic data,
//! and evaluation.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod analysis;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod kvconfig;
pub mod layers;
pub mod models;
pub mod rng;
pub mod scalar;
pub mod sparsity;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use layers::{Label, Mode};
pub use models::{ArchitectureSpec, Checkpoint, ModelKind, ModelParams};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type ModelParams64 = ModelParams<f64>;
pub type ModelParams32 = ModelParams<f32>;
pub type ChannelStore64 = data::ChannelStore<f64>;
pub type ChannelStore32 = data::ChannelStore<f32>;
pub type DatasetSplits64 = data::DatasetSplits<f64>;
pub type DatasetSplits32 = data::DatasetSplits<f32>;

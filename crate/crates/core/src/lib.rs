//! Spatio-temporal convolutional networks for estimating a marker's 3D
//! position from a stream of volumetric images.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`]: dense `f64` tensors and the binary tensor record format.
//! * [`ops`]: convolution (3D, full 4D, factorized 4D, channel stacking),
//!   pooling, dense and activation kernels with exact backward passes.
//! * [`model`]: network assembly for the ResNet, Inception, ResNeXt and
//!   Densenet block families in each convolution mode.
//! * [`checkpoint`]: versioned model and optimizer files.
//! * [`optim`]: MSE loss, Adam and the training loop.
//! * [`phantom`]: spline trajectories and synthetic marker volumes.
//! * [`metrics`]: MAE / rMAE, evaluation reports and latency.
//! * [`experiment`]: presets, the train/evaluate pipeline and the sweep.
//! * [`gradcheck`] and [`cli`]: the verification harness and command-line tool.

extern crate self as v4d;

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod phantom;
pub mod rng;
pub mod samples;
pub mod tensor;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use tensor::Tensor;

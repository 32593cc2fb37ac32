//! Residual fully-connected network that lifts 16 2D joint positions to
//! 16 root-relative 3D joint positions, trained from scratch with
//! hand-written backward passes.
//!
//! Module map:
//! - [`nn`]: tensors, layers, gradient checking
//! - [`model`]: the lifter network, variant presets, checkpoints
//! - [`metrics`]: MSE / L1 / weighted MSE losses, MPJPE metrics
//! - [`data`]: skeleton, dataset CSV, normalization, splits, synthetic poses
//! - [`train`]: Adam, learning-rate schedule, training loop
//! - [`report`]: per-action tables and version comparisons
//! - [`viz`]: SVG skeleton rendering
//! - [`verify`]: the self-check suite behind `poselift verify`

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod report;
pub mod train;
pub mod verify;
pub mod viz;

pub use error::{Error, Result};

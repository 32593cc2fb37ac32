//! The lifter network, its variant presets, and checkpoint I/O.

pub mod checkpoint;
mod config;
mod lifter;

pub use checkpoint::{Checkpoint, TrainingMeta, FORMAT_VERSION};
pub use config::{ActivationKind, LifterConfig, SwishSharing, Variant};
pub use lifter::{Activation, Lifter, ResidualBlock, Stage, SHARED_BETA_NAME};

//! The experiment surface: configuration, checkpoints and the subcommands.

mod checkpoint;
mod commands;
mod config;

pub use checkpoint::{Checkpoint, StoredNetwork, UCTL_MAGIC, UCTL_VERSION};
pub use commands::*;
pub use config::{AugmentationChoice, ClusterSpec, DatasetSpec, ExperimentConfig, GenerateSpec, TrainSpec};

//! Dense feed-forward networks with pruning masks.
//!
//! Weights are stored `fan_out × fan_in` row-major. Each layer carries a
//! boolean mask of the same shape; a masked weight is skipped by every kernel,
//! so it reads as zero in the forward pass and never receives an update.

mod arch;
mod kernels;
mod network;
mod train;

pub use arch::{Activation, NetworkArch};
pub use network::{Checkpoint, Gradients, Layer, LayerGrad, LayerParams, Network};
pub use train::{evaluate, resume, steps_per_epoch, train, EpochStats, Labeled, TrainConfig, TrainOutcome};

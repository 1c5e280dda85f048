//! Prunability laboratory.
//!
//! Generates synthetic classification data with independently controlled
//! extrinsic, intrinsic and task dimensionality, trains small dense networks,
//! runs iterative magnitude pruning with weight rewinding, and measures how the
//! smallest matching subnetwork moves as the data dimensionality changes.
//! Rank-correlation analysis with Monte Carlo uncertainty propagation turns the
//! resulting prunability tables into a single correlation estimate.
//!
//! The crate is split into the pieces of that pipeline:
//!
//! * [`nn`]: dense feed-forward networks with masks, exact gradients and masked SGD.
//! * [`datagen`]: synthetic datasets and the nearest-neighbor resampler.
//! * [`pruning`]: magnitude pruning, rewinding, IMP trials and prunability.
//! * [`stats`]: Spearman correlation, Monte Carlo rollouts, histograms and
//!   built-in result tables.
//! * [`harness`]: experiment configs, sweeps, run directories and analysis.

pub mod container;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod nn;
pub mod pruning;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};

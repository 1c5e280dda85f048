//! Synthetic datasets with controlled extrinsic (`D`), intrinsic (`d`) and
//! task (`t`) dimensionality, plus the nearest-neighbor image resampler.
//!
//! Two generators share one labeling rule. Latents `z` are standard normal;
//! a hyperplane normal `h` keeps `t` of its `d` components, and the label is
//! `1` when `h·z ≥ 0`. The linear generator embeds `x = A·z` with a random
//! `D × d` matrix; the manifold generator pushes masked latents through a
//! fixed random tanh network.

mod io;
mod linear;
mod manifold;
mod resize;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Labeled;

pub use linear::{embed_linear, gen_linear_task_dataset, label_latents, make_hyperplane, sample_embedding, sample_latents};
pub use manifold::{gen_manifold_dataset, ManifoldMap};
pub use io::{write_split_csv, DATASET_KIND};
pub use resize::{nn_resize, resize_dataset};

/// Largest allowed distance of the positive-class fraction from one half.
pub const BALANCE_TOLERANCE: f64 = 0.05;
/// Hyperplane/latent redraws before the balance guard gives up.
pub const MAX_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    #[default]
    Linear,
    NonlinearManifold,
}

/// Shape of the random tanh map used by the manifold generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManifoldParams {
    /// Full latent width; the first `intrinsic_dim` coordinates are active.
    pub latent_dim: usize,
    /// Width of both hidden tanh layers; `None` means `4 · extrinsic_dim`.
    pub hidden_width: Option<usize>,
    /// Latents are multiplied by this before entering the map. Small values
    /// keep the tanh layers in their near-linear regime.
    pub latent_scale: f64,
}

impl Default for ManifoldParams {
    fn default() -> Self {
        ManifoldParams { latent_dim: 128, hidden_width: None, latent_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDatasetSpec {
    pub extrinsic_dim: usize,
    pub intrinsic_dim: usize,
    pub task_dim: usize,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub embedding: Embedding,
    #[serde(default)]
    pub manifold: ManifoldParams,
}

fn default_n_train() -> usize {
    50_000
}

fn default_n_test() -> usize {
    10_000
}

impl TaskDatasetSpec {
    pub fn linear(extrinsic_dim: usize, intrinsic_dim: usize, task_dim: usize, seed: u64) -> Self {
        TaskDatasetSpec {
            extrinsic_dim,
            intrinsic_dim,
            task_dim,
            n_train: default_n_train(),
            n_test: default_n_test(),
            seed,
            embedding: Embedding::Linear,
            manifold: ManifoldParams::default(),
        }
    }

    pub fn with_sizes(mut self, n_train: usize, n_test: usize) -> Self {
        self.n_train = n_train;
        self.n_test = n_test;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (big_d, d, t) = (self.extrinsic_dim, self.intrinsic_dim, self.task_dim);
        if big_d == 0 || d == 0 || t == 0 {
            return Err(Error::InvalidSpec(format!("dimensions must be positive (D={big_d}, d={d}, t={t})")));
        }
        if t > d {
            return Err(Error::InvalidSpec(format!("task_dim {t} exceeds intrinsic_dim {d}")));
        }
        if d > big_d {
            return Err(Error::InvalidSpec(format!("intrinsic_dim {d} exceeds extrinsic_dim {big_d}")));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidSpec("n_train and n_test must be positive".into()));
        }
        if self.embedding == Embedding::NonlinearManifold {
            let m = &self.manifold;
            if m.latent_dim < d {
                return Err(Error::InvalidSpec(format!("manifold latent_dim {} is below intrinsic_dim {d}", m.latent_dim)));
            }
            if m.hidden_width == Some(0) {
                return Err(Error::InvalidSpec("manifold hidden_width must be positive".into()));
            }
            if !(m.latent_scale.is_finite() && m.latent_scale > 0.0) {
                return Err(Error::InvalidSpec(format!("latent_scale must be positive, got {}", m.latent_scale)));
            }
        }
        Ok(())
    }

    /// Width of the stored latent vectors.
    pub fn latent_width(&self) -> usize {
        match self.embedding {
            Embedding::Linear => self.intrinsic_dim,
            Embedding::NonlinearManifold => self.manifold.latent_dim,
        }
    }
}

/// Normal vector of the labeling hyperplane in the intrinsic space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    /// Sorted indices of the components kept nonzero.
    pub retained: Vec<usize>,
}

/// Everything needed to regenerate or audit a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: TaskDatasetSpec,
    pub hyperplane: Hyperplane,
    /// `D × d` embedding matrix of the linear generator.
    #[serde(skip)]
    pub embedding_matrix: Option<Array2<f64>>,
    /// Seed of the tanh map for the manifold generator.
    pub manifold_seed: Option<u64>,
    /// Number of leading latent coordinates that are not masked to zero.
    pub active_dims: usize,
    /// 1-based index of the balance-guard attempt that was accepted.
    pub attempt: usize,
    /// Set when the inputs were produced by nearest-neighbor resizing.
    pub resized: Option<ResizeProvenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResizeProvenance {
    /// `[height, width, channels]` of the generated images.
    pub source_shape: [usize; 3],
    pub target_shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: Array2<f64>,
    pub labels: Vec<u8>,
    pub latents: Array2<f64>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labeled(&self) -> Labeled<'_> {
        Labeled { inputs: self.inputs.view(), labels: &self.labels }
    }

    pub fn positive_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&y| y == 1).count() as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub provenance: Provenance,
    pub train: Split,
    pub test: Split,
}

impl Dataset {
    pub fn spec(&self) -> &TaskDatasetSpec {
        &self.provenance.spec
    }

    pub fn input_dim(&self) -> usize {
        self.train.inputs.ncols()
    }
}

/// Generate with whichever embedding the spec names.
pub fn generate(spec: &TaskDatasetSpec) -> Result<Dataset> {
    match spec.embedding {
        Embedding::Linear => gen_linear_task_dataset(spec),
        Embedding::NonlinearManifold => gen_manifold_dataset(spec),
    }
}

pub(crate) fn balanced(labels_a: &[u8], labels_b: &[u8]) -> (bool, f64) {
    let n = labels_a.len() + labels_b.len();
    let pos = labels_a.iter().chain(labels_b).filter(|&&y| y == 1).count();
    let frac = pos as f64 / n as f64;
    ((frac - 0.5).abs() <= BALANCE_TOLERANCE, frac)
}

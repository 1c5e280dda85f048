use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::linear::draw_labeled_latents;
use super::{Dataset, Embedding, Provenance, Split, TaskDatasetSpec};
use crate::error::{Error, Result};
use crate::seed;

const ROW_CHUNK: usize = 1024;

/// Fixed random map `latent → tanh → tanh → linear → D`.
///
/// Weights are `U(-1/√fan_in, 1/√fan_in)`, there are no biases, so `g(0) = 0`.
#[derive(Debug, Clone)]
pub struct ManifoldMap {
    layers: [Array2<f64>; 3],
    latent_scale: f64,
}

impl ManifoldMap {
    pub fn new(latent_dim: usize, hidden_width: usize, output_dim: usize, latent_scale: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut layer = |fan_out: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..bound))
        };
        let layers = [
            layer(hidden_width, latent_dim),
            layer(hidden_width, hidden_width),
            layer(output_dim, hidden_width),
        ];
        ManifoldMap { layers, latent_scale }
    }

    pub fn for_spec(spec: &TaskDatasetSpec) -> Self {
        let m = &spec.manifold;
        ManifoldMap::new(
            m.latent_dim,
            m.hidden_width.unwrap_or(4 * spec.extrinsic_dim),
            spec.extrinsic_dim,
            m.latent_scale,
            seed::stream(spec.seed, "manifold"),
        )
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[2].nrows()
    }

    /// Map every latent row; processed in fixed-size row blocks.
    pub fn apply(&self, latents: ArrayView2<f64>) -> Result<Array2<f64>> {
        if latents.ncols() != self.latent_dim() {
            return Err(Error::DimensionMismatch { expected: self.latent_dim(), got: latents.ncols() });
        }
        let n = latents.nrows();
        let mut out = Array2::zeros((n, self.output_dim()));
        for start in (0..n).step_by(ROW_CHUNK) {
            let end = (start + ROW_CHUNK).min(n);
            let z = latents.slice(s![start..end, ..]).mapv(|v| v * self.latent_scale);
            let h1 = z.dot(&self.layers[0].t()).mapv_into(f64::tanh);
            let h2 = h1.dot(&self.layers[1].t()).mapv_into(f64::tanh);
            out.slice_mut(s![start..end, ..]).assign(&h2.dot(&self.layers[2].t()));
        }
        Ok(out)
    }

    /// Single-point evaluation, e.g. `g(0)`.
    pub fn apply_one(&self, latent: &[f64]) -> Result<Vec<f64>> {
        let z = ArrayView2::from_shape((1, latent.len()), latent)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(self.apply(z)?.index_axis(Axis(0), 0).to_vec())
    }
}

/// Masked-latent dataset pushed through a fixed random tanh map.
///
/// Latents have `manifold.latent_dim` coordinates of which the first
/// `intrinsic_dim` are active; the rest are zero before entering the map, so
/// the generated cloud has intrinsic dimensionality at most `intrinsic_dim`.
pub fn gen_manifold_dataset(spec: &TaskDatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    if spec.embedding != Embedding::NonlinearManifold {
        return Err(Error::InvalidSpec("gen_manifold_dataset needs embedding = nonlinear_manifold".into()));
    }
    let map = ManifoldMap::for_spec(spec);
    let drawn = draw_labeled_latents(spec, spec.manifold.latent_dim)?;
    let (z_train, y_train) = drawn.train;
    let (z_test, y_test) = drawn.test;
    let train = Split { inputs: map.apply(z_train.view())?, labels: y_train, latents: z_train };
    let test = Split { inputs: map.apply(z_test.view())?, labels: y_test, latents: z_test };
    Ok(Dataset {
        provenance: Provenance {
            spec: spec.clone(),
            hyperplane: drawn.hyperplane,
            embedding_matrix: None,
            manifold_seed: Some(seed::stream(spec.seed, "manifold")),
            active_dims: spec.intrinsic_dim,
            attempt: drawn.attempt,
            resized: None,
        },
        train,
        test,
    })
}

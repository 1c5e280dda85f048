use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{balanced, Dataset, Embedding, Hyperplane, Provenance, Split, TaskDatasetSpec, MAX_ATTEMPTS};
use crate::error::{Error, Result};
use crate::seed;

/// Draw from the open interval `(-1, 1)`, excluding zero.
fn open_unit(rng: &mut impl Rng) -> f64 {
    loop {
        let v: f64 = rng.random_range(-1.0..1.0);
        if v != -1.0 && v != 0.0 {
            return v;
        }
    }
}

/// `D × d` matrix with i.i.d. `U(-1, 1)` entries, row-major draw order.
pub fn sample_embedding(extrinsic_dim: usize, intrinsic_dim: usize, seed: u64) -> Result<Array2<f64>> {
    if intrinsic_dim > extrinsic_dim {
        return Err(Error::InvalidSpec(format!(
            "intrinsic_dim {intrinsic_dim} exceeds extrinsic_dim {extrinsic_dim}"
        )));
    }
    let mut rng = seed::rng(seed);
    Ok(Array2::from_shape_simple_fn((extrinsic_dim, intrinsic_dim), || open_unit(&mut rng)))
}

/// `n × d_full` standard-normal latents whose trailing
/// `d_full - active_dims` coordinates are exactly zero.
pub fn sample_latents(n: usize, d_full: usize, active_dims: usize, seed: u64) -> Result<Array2<f64>> {
    if active_dims > d_full {
        return Err(Error::InvalidSpec(format!("active_dims {active_dims} exceeds latent width {d_full}")));
    }
    let mut rng = seed::rng(seed);
    let mut z = Array2::zeros((n, d_full));
    for mut row in z.rows_mut() {
        for v in row.iter_mut().take(active_dims) {
            *v = rng.sample(StandardNormal);
        }
    }
    Ok(z)
}

/// Uniform normal vector on `(-1, 1)^d` with all but `t` randomly chosen
/// components zeroed.
pub fn make_hyperplane(d: usize, t: usize, seed: u64) -> Result<Hyperplane> {
    if t == 0 || t > d {
        return Err(Error::InvalidSpec(format!("task_dim must lie in 1..={d}, got {t}")));
    }
    let mut rng = seed::rng(seed);
    let full: Vec<f64> = (0..d).map(|_| open_unit(&mut rng)).collect();
    let mut retained = rand::seq::index::sample(&mut rng, d, t).into_vec();
    retained.sort_unstable();
    let mut normal = vec![0.0; d];
    for &k in &retained {
        normal[k] = full[k];
    }
    Ok(Hyperplane { normal, retained })
}

/// Label each latent row by the side of the hyperplane it falls on; the
/// hyperplane only sees the first `normal.len()` coordinates and `h·z = 0`
/// maps to class 1.
pub fn label_latents(hyperplane: &Hyperplane, latents: ArrayView2<f64>) -> Vec<u8> {
    let h = &hyperplane.normal;
    latents
        .rows()
        .into_iter()
        .map(|row| {
            let s: f64 = h.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
            u8::from(s >= 0.0)
        })
        .collect()
}

/// `x = A·z` for every latent row (`n × D`).
pub fn embed_linear(embedding: &Array2<f64>, latents: ArrayView2<f64>) -> Array2<f64> {
    latents.dot(&embedding.t())
}

pub(crate) struct LabeledLatents {
    pub hyperplane: Hyperplane,
    pub train: (Array2<f64>, Vec<u8>),
    pub test: (Array2<f64>, Vec<u8>),
    pub attempt: usize,
}

/// Draw hyperplane and latents, redrawing until the class balance guard passes.
pub(crate) fn draw_labeled_latents(spec: &TaskDatasetSpec, latent_width: usize) -> Result<LabeledLatents> {
    let (d, t) = (spec.intrinsic_dim, spec.task_dim);
    let mut last_fraction = 0.0;
    for attempt in 1..=MAX_ATTEMPTS {
        let a = attempt as u64;
        let hyperplane = make_hyperplane(d, t, seed::derive(seed::stream(spec.seed, "hyperplane"), &[a]))?;
        let z_train = sample_latents(spec.n_train, latent_width, d, seed::derive(seed::stream(spec.seed, "latents-train"), &[a]))?;
        let z_test = sample_latents(spec.n_test, latent_width, d, seed::derive(seed::stream(spec.seed, "latents-test"), &[a]))?;
        let y_train = label_latents(&hyperplane, z_train.view());
        let y_test = label_latents(&hyperplane, z_test.view());
        let (ok, fraction) = balanced(&y_train, &y_test);
        if ok {
            return Ok(LabeledLatents { hyperplane, train: (z_train, y_train), test: (z_test, y_test), attempt });
        }
        log::debug!("class balance {fraction:.4} rejected on attempt {attempt}");
        last_fraction = fraction;
    }
    Err(Error::ClassImbalance { attempts: MAX_ATTEMPTS, fraction: last_fraction })
}

/// Linear classification task: `x = A·z`, label `[h·z ≥ 0]`. Train and test
/// share one `(A, h)`.
pub fn gen_linear_task_dataset(spec: &TaskDatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    if spec.embedding != Embedding::Linear {
        return Err(Error::InvalidSpec("gen_linear_task_dataset needs embedding = linear".into()));
    }
    let a = sample_embedding(spec.extrinsic_dim, spec.intrinsic_dim, seed::stream(spec.seed, "embedding"))?;
    let drawn = draw_labeled_latents(spec, spec.intrinsic_dim)?;
    let (z_train, y_train) = drawn.train;
    let (z_test, y_test) = drawn.test;
    let train = Split { inputs: embed_linear(&a, z_train.view()), labels: y_train, latents: z_train };
    let test = Split { inputs: embed_linear(&a, z_test.view()), labels: y_test, latents: z_test };
    Ok(Dataset {
        provenance: Provenance {
            spec: spec.clone(),
            hyperplane: drawn.hyperplane,
            embedding_matrix: Some(a),
            manifold_seed: None,
            active_dims: spec.intrinsic_dim,
            attempt: drawn.attempt,
            resized: None,
        },
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn embedding_is_deterministic_and_open_range() {
        let a = sample_embedding(4, 2, 9).unwrap();
        assert_eq!(a, sample_embedding(4, 2, 9).unwrap());
        assert_ne!(a, sample_embedding(4, 2, 10).unwrap());
        let big = sample_embedding(64, 32, 1).unwrap();
        assert!(big.iter().all(|&v| v > -1.0 && v < 1.0));
        assert!(matches!(sample_embedding(2, 4, 0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn latent_masking() {
        let full = sample_latents(50, 6, 6, 3).unwrap();
        assert!(full.iter().all(|&v| v != 0.0));
        let none = sample_latents(50, 6, 0, 3).unwrap();
        assert!(none.iter().all(|&v| v == 0.0));
        let part = sample_latents(50, 6, 4, 3).unwrap();
        for row in part.rows() {
            assert!(row.iter().take(4).all(|&v| v != 0.0));
            assert!(row.iter().skip(4).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn hyperplane_zeroes_exactly_d_minus_t() {
        for (d, t) in [(8, 8), (8, 3), (128, 16), (5, 1)] {
            let h = make_hyperplane(d, t, 42).unwrap();
            assert_eq!(h.normal.iter().filter(|&&v| v == 0.0).count(), d - t);
            assert_eq!(h.retained.len(), t);
            assert!(h.retained.windows(2).all(|w| w[0] < w[1]));
            for (k, &v) in h.normal.iter().enumerate() {
                assert_eq!(v != 0.0, h.retained.contains(&k));
            }
        }
        assert!(make_hyperplane(4, 0, 1).is_err());
        assert!(make_hyperplane(4, 5, 1).is_err());
    }

    #[test]
    fn hyperplane_subset_varies_with_seed() {
        let sets: std::collections::HashSet<Vec<usize>> =
            (0..10).map(|s| make_hyperplane(128, 16, s).unwrap().retained).collect();
        assert!(sets.len() >= 2);
    }

    #[test]
    fn labels_follow_sign_convention() {
        let h = Hyperplane { normal: vec![1.0, -2.0, 0.0], retained: vec![0, 1] };
        let z = array![[3.0, 1.0, -9.0], [0.0, 1.0, 5.0], [2.0, 1.0, 0.0]];
        assert_eq!(label_latents(&h, z.view()), vec![1, 0, 1]);
    }

    #[test]
    fn full_task_dim_matches_unzeroed_hyperplane() {
        let spec = TaskDatasetSpec::linear(16, 8, 8, 5).with_sizes(400, 100);
        let ds = gen_linear_task_dataset(&spec).unwrap();
        let h = &ds.provenance.hyperplane;
        assert!(h.normal.iter().all(|&v| v != 0.0));
        let manual: Vec<u8> = ds
            .train
            .latents
            .rows()
            .into_iter()
            .map(|z| u8::from(z.dot(&ndarray::Array1::from(h.normal.clone())) >= 0.0))
            .collect();
        assert_eq!(manual, ds.train.labels);
    }

    #[test]
    fn rejects_inconsistent_dims() {
        let mut spec = TaskDatasetSpec::linear(16, 8, 9, 0).with_sizes(10, 10);
        assert!(gen_linear_task_dataset(&spec).is_err());
        spec.task_dim = 4;
        spec.intrinsic_dim = 32;
        assert!(gen_linear_task_dataset(&spec).is_err());
    }

    #[test]
    fn tiny_sets_trip_the_balance_guard() {
        // a single sample is always 0% or 100% positive
        let spec = TaskDatasetSpec::linear(4, 2, 2, 0).with_sizes(1, 1);
        match gen_linear_task_dataset(&spec) {
            Err(Error::ClassImbalance { attempts, .. }) => assert_eq!(attempts, MAX_ATTEMPTS),
            other => {
                // two samples can split 1/1, which passes the guard
                let ds = other.unwrap();
                assert_eq!(ds.train.labels.len() + ds.test.labels.len(), 2);
            }
        }
    }
}

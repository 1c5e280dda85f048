use ndarray::Array2;
use prunelab::datagen::{
    embed_linear, generate, label_latents, nn_resize, sample_embedding, sample_latents, Embedding, ManifoldParams, TaskDatasetSpec,
};

/// Numerical rank by Gaussian elimination with partial pivoting.
fn rank(m: &Array2<f64>) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.dim();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let tol = scale * 1e-9 * rows.max(cols) as f64;
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let p = (r..rows).max_by(|&i, &j| a[[i, c]].abs().total_cmp(&a[[j, c]].abs())).unwrap();
        if a[[p, c]].abs() <= tol {
            continue;
        }
        for k in 0..cols {
            a.swap([r, k], [p, k]);
        }
        for i in r + 1..rows {
            let f = a[[i, c]] / a[[r, c]];
            if f != 0.0 {
                for k in c..cols {
                    a[[i, k]] -= f * a[[r, k]];
                }
            }
        }
        r += 1;
    }
    r
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn sym_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[[i, j]].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn covariance(x: &Array2<f64>) -> Array2<f64> {
    let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = x - &mean;
    centered.t().dot(&centered) / x.nrows() as f64
}

#[test]
fn embedding_has_full_column_rank_across_seeds() {
    for seed in 0..100 {
        let a = sample_embedding(32, 8, seed).unwrap();
        assert_eq!(rank(&a), 8, "seed {seed}");
    }
}

#[test]
fn linear_inputs_have_rank_d() {
    let ds = generate(&TaskDatasetSpec::linear(1024, 128, 16, 3).with_sizes(400, 100)).unwrap();
    assert_eq!(rank(&ds.train.inputs), 128);
    let small = generate(&TaskDatasetSpec::linear(40, 6, 6, 1).with_sizes(300, 50)).unwrap();
    assert_eq!(rank(&small.train.inputs), 6);
}

#[test]
fn stored_parts_reproduce_inputs_and_labels() {
    let ds = generate(&TaskDatasetSpec::linear(24, 5, 3, 8).with_sizes(500, 200)).unwrap();
    let a = ds.provenance.embedding_matrix.as_ref().unwrap();
    for split in [&ds.train, &ds.test] {
        assert_eq!(embed_linear(a, split.latents.view()), split.inputs);
        assert_eq!(label_latents(&ds.provenance.hyperplane, split.latents.view()), split.labels);
    }
    let frac = ds.train.positive_fraction();
    assert!((0.4..=0.6).contains(&frac));
}

#[test]
fn regeneration_is_byte_identical() {
    for spec in [
        TaskDatasetSpec::linear(30, 6, 2, 77).with_sizes(200, 60),
        TaskDatasetSpec {
            embedding: Embedding::NonlinearManifold,
            manifold: ManifoldParams { latent_dim: 8, hidden_width: Some(20), latent_scale: 0.5 },
            ..TaskDatasetSpec::linear(10, 4, 4, 78).with_sizes(200, 60)
        },
    ] {
        let bytes = |_: ()| {
            let mut b = Vec::new();
            generate(&spec).unwrap().to_container().unwrap().write_to(&mut b).unwrap();
            b
        };
        assert_eq!(bytes(()), bytes(()));
    }
}

#[test]
fn active_latent_variance_is_one() {
    let z = sample_latents(100_000, 6, 4, 5).unwrap();
    let cov = covariance(&z);
    for j in 0..4 {
        assert!((cov[[j, j]] - 1.0).abs() < 0.05, "var {}", cov[[j, j]]);
    }
    assert!(z.column(4).iter().chain(z.column(5).iter()).all(|&v| v == 0.0));
    assert!(sample_latents(10, 3, 0, 1).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn manifold_cloud_is_locally_low_dimensional() {
    let active = 3;
    let spec = TaskDatasetSpec {
        embedding: Embedding::NonlinearManifold,
        manifold: ManifoldParams { latent_dim: 16, hidden_width: None, latent_scale: 0.01 },
        ..TaskDatasetSpec::linear(24, active, active, 12).with_sizes(10_000, 100)
    };
    let ds = generate(&spec).unwrap();
    let ev = sym_eigenvalues(covariance(&ds.train.inputs));
    let total: f64 = ev.iter().sum();
    let top: f64 = ev[..active].iter().sum();
    assert!(top / total >= 0.999, "top-{active} share {}", top / total);
}

#[test]
fn resize_up_then_down_is_identity() {
    let img = ndarray::Array3::from_shape_fn((3, 5, 2), |(i, j, k)| (i * 31 + j * 7 + k) as f64);
    let up = nn_resize(img.view(), (9, 15)).unwrap();
    assert_eq!(nn_resize(up.view(), (3, 5)).unwrap(), img);
}

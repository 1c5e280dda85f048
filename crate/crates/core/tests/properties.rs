use ndarray::{Array2, Array3};
use proptest::prelude::*;

use prunelab::datagen::nn_resize;
use prunelab::nn::{LayerParams, Network, NetworkArch};
use prunelab::pruning::{magnitude_prune, rewind, surviving_after, PruneScope};
use prunelab::stats::{emit_histogram, mc_correlation, rank_with_ties, spearman_rho, CorrelationReport, GroupStat, McConfig};

/// Net with the given per-layer weights (values drawn from a small set so
/// magnitude ties are common).
fn net_from(arch: &NetworkArch, values: &[f64]) -> Network {
    let mut it = values.iter().cycle();
    let params = arch
        .layer_shapes()
        .into_iter()
        .map(|s| LayerParams {
            weights: Array2::from_shape_simple_fn(s, || *it.next().unwrap()),
            bias: ndarray::Array1::from_elem(s.0, 0.25),
        })
        .collect();
    Network::from_params(arch, params, None).unwrap()
}

/// Sort every unmasked weight by (|w|, layer, flat index) and drop the head.
fn prune_oracle(net: &Network, fraction: f64) -> Vec<Array2<bool>> {
    let mut all = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        for (i, (&w, &m)) in layer.weights().iter().zip(layer.mask().iter()).enumerate() {
            if m {
                all.push((w.abs(), l, i));
            }
        }
    }
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let keep = ((1.0 - fraction) * all.len() as f64).floor() as usize;
    let mut masks = net.masks();
    for &(_, l, i) in &all[..all.len() - keep] {
        let c = masks[l].ncols();
        masks[l][[i / c, i % c]] = false;
    }
    masks
}

fn arch_strategy() -> impl Strategy<Value = NetworkArch> {
    (1usize..6, 1usize..6, 1usize..5).prop_map(|(d, p, q)| NetworkArch::mlp(d, p, q))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn global_prune_matches_sort_oracle(arch in arch_strategy(), vals in prop::collection::vec(-3i8..=3, 1..40), fraction in 0.05f64..0.9) {
        let values: Vec<f64> = vals.iter().map(|&v| f64::from(v) * 0.5).collect();
        let net = net_from(&arch, &values);
        let want = prune_oracle(&net, fraction);
        match magnitude_prune(&net, fraction, PruneScope::Global) {
            Ok(masks) => prop_assert_eq!(masks, want),
            Err(_) => prop_assert_eq!(surviving_after(net.unmasked_count(), fraction), 0),
        }
    }

    #[test]
    fn repeated_pruning_is_monotone_and_follows_the_floor_schedule(seed in any::<u64>(), fraction in 0.05f64..0.5) {
        let arch = NetworkArch::mlp(12, 10, 6);
        let mut net = Network::init(&arch, seed).unwrap();
        let mut expected = net.weight_count();
        for _ in 0..25 {
            let before = net.masks();
            let masks = match magnitude_prune(&net, fraction, PruneScope::Global) {
                Ok(m) => m,
                Err(_) => { prop_assert_eq!(surviving_after(expected, fraction), 0); break; }
            };
            for (b, a) in before.iter().zip(&masks) {
                prop_assert!(b.iter().zip(a.iter()).all(|(&was, &now)| was || !now));
            }
            net.set_masks(masks).unwrap();
            expected = surviving_after(expected, fraction);
            prop_assert_eq!(net.unmasked_count(), expected);
        }
    }

    #[test]
    fn rewind_is_bit_exact_on_survivors(seed in any::<u64>(), fraction in 0.1f64..0.9) {
        let arch = NetworkArch::mlp(7, 6, 5);
        let start = Network::init(&arch, seed).unwrap();
        let ckpt = start.checkpoint(0);
        let mut moved = Network::init(&arch, seed ^ 0x5555).unwrap();
        let masks = magnitude_prune(&moved, fraction, PruneScope::PerLayer).unwrap();
        moved.set_masks(masks).unwrap();
        let back = rewind(&moved, &ckpt).unwrap();
        prop_assert_eq!(back.masks(), moved.masks());
        for (layer, p) in back.layers().iter().zip(&ckpt.layers) {
            for ((w, c), &m) in layer.weights().iter().zip(p.weights.iter()).zip(layer.mask().iter()) {
                let want = if m { c.to_bits() } else { 0.0f64.to_bits() };
                prop_assert_eq!(w.to_bits(), want);
            }
            prop_assert_eq!(layer.bias(), &p.bias);
        }
        prop_assert_eq!(rewind(&back, &ckpt).unwrap(), back);
    }

    #[test]
    fn spearman_is_bounded_and_rank_invariant(xs in prop::collection::vec(-50i32..50, 2..40), seed in any::<u64>()) {
        let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let mut s = seed;
        let ys: Vec<f64> = xs.iter().map(|_| { s = prunelab::seed::splitmix64(s); (s % 17) as f64 }).collect();
        if let Some(r) = spearman_rho(&xs, &ys).unwrap() {
            prop_assert!(r.abs() <= 1.0);
            let tx: Vec<f64> = xs.iter().map(|x| x.powi(3) + 2.0 * x).collect();
            let ty: Vec<f64> = ys.iter().map(|y| y.exp()).collect();
            let r2 = spearman_rho(&tx, &ty).unwrap().unwrap();
            prop_assert!((r - r2).abs() < 1e-12);
        }
    }

    #[test]
    fn spearman_is_exactly_one_on_strictly_monotone_pairs(mut xs in prop::collection::btree_set(-1000i32..1000, 2..50).prop_map(|s| s.into_iter().collect::<Vec<_>>()), flip in any::<bool>()) {
        if flip { xs.reverse(); }
        let x: Vec<f64> = xs.iter().map(|&v| f64::from(v)).collect();
        let up: Vec<f64> = x.iter().map(|v| v * 3.0 + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert_eq!(spearman_rho(&x, &up).unwrap(), Some(1.0));
        prop_assert_eq!(spearman_rho(&x, &down).unwrap(), Some(-1.0));
    }

    #[test]
    fn ranks_sum_and_permute_consistently(vals in prop::collection::vec(-5i32..5, 1..30)) {
        let v: Vec<f64> = vals.iter().map(|&x| f64::from(x)).collect();
        let r = rank_with_ties(&v);
        let n = v.len() as f64;
        prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        let rev: Vec<f64> = v.iter().rev().copied().collect();
        let rr: Vec<f64> = rank_with_ties(&rev).into_iter().rev().collect();
        prop_assert_eq!(r, rr);
    }

    #[test]
    fn histogram_conserves_samples(samples in prop::collection::vec(-1.0f64..=1.0, 0..200), bins in 1usize..30) {
        let report = CorrelationReport { rho_mean: 0.0, rho_std: 0.0, samples: samples.clone(), undefined_rollouts: 0, config: McConfig::default() };
        let h = emit_histogram(&report, bins).unwrap();
        prop_assert_eq!(h.len(), bins);
        prop_assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), samples.len());
        prop_assert_eq!(h[0].bin_lo, -1.0);
        prop_assert_eq!(h[bins - 1].bin_hi, 1.0);
    }

    #[test]
    fn noiseless_tables_reduce_to_the_table_rho(dims in prop::collection::btree_set(1u64..500, 2..8), increasing in any::<bool>(), seed in any::<u64>()) {
        let rows: Vec<GroupStat> = dims.iter().map(|&d| GroupStat {
            group_label: "g".into(),
            dimension_value: d,
            mean_pct: if increasing { d as f64 } else { -(d as f64) },
            std_pct: 0.0,
        }).collect();
        let cfg = McConfig { n_outcomes: 60, n_rollouts: 25, seed, ..McConfig::default() };
        let rep = mc_correlation(&rows, &cfg).unwrap();
        let want = if increasing { 1.0 } else { -1.0 };
        // a rollout that drew a single row is undefined and skipped
        prop_assert!(rep.samples.iter().all(|&s| s == want));
        prop_assert_eq!(rep.rho_std, 0.0);
    }

    #[test]
    fn resize_copies_source_values(h in 1usize..7, w in 1usize..7, c in 1usize..3, th in 1usize..12, tw in 1usize..12, k in 1usize..4) {
        let img = Array3::from_shape_fn((h, w, c), |(i, j, ch)| (i * 100 + j * 10 + ch) as u32);
        let out = nn_resize(img.view(), (th, tw)).unwrap();
        for ((i, j, ch), &v) in out.indexed_iter() {
            prop_assert_eq!(v, img[[i * h / th, j * w / tw, ch]]);
        }
        let up = nn_resize(img.view(), (h * k, w * k)).unwrap();
        prop_assert_eq!(nn_resize(up.view(), (h, w)).unwrap(), img);
    }
}

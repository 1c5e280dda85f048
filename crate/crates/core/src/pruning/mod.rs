//! Iterative magnitude pruning with weight rewinding.
//!
//! One IMP trial trains the dense network, keeps a copy of the parameters at
//! the rewind step, then repeatedly prunes the smallest surviving weights,
//! resets the survivors to the rewind copy and retrains the rest of the
//! schedule. Prunability is the lowest weights-remaining percentage at which a
//! pruned network still matches the dense test accuracy.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::nn::{evaluate, resume, train, Checkpoint, Labeled, Network, NetworkArch, TrainConfig};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PruneScope {
    #[default]
    Global,
    PerLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpConfig {
    pub prune_fraction_per_iter: f64,
    pub n_iterations: usize,
    pub scope: PruneScope,
    pub train: TrainConfig,
    /// Only `false` is supported.
    pub prune_biases: bool,
}

impl Default for ImpConfig {
    fn default() -> Self {
        ImpConfig {
            prune_fraction_per_iter: 0.2,
            n_iterations: 25,
            scope: PruneScope::Global,
            train: TrainConfig::default(),
            prune_biases: false,
        }
    }
}

impl ImpConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.prune_fraction_per_iter;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidPruneFraction(p));
        }
        if self.prune_biases {
            return Err(Error::InvalidTrainConfig("prune_biases = true is not supported".into()));
        }
        Ok(())
    }

    /// Fraction of weights left after every iteration, `(1 − p)^n`.
    pub fn terminal_density(&self) -> f64 {
        (1.0 - self.prune_fraction_per_iter).powi(self.n_iterations as i32)
    }
}

/// Surviving count after one prune of `m` weights: `⌊(1 − p)·m⌋`.
pub fn surviving_after(m: usize, fraction: f64) -> usize {
    ((1.0 - fraction) * m as f64).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub weights_remaining_pct: f64,
    pub test_accuracy: f64,
    pub weights_remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    /// `0.0` with no levels when dense training itself diverged.
    pub dense_accuracy: f64,
    /// Level 0 is the dense network.
    pub levels: Vec<Level>,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunabilityResult {
    pub per_seed_min_matching_pct: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Trials left out: diverged, or no pruned level matched.
    pub excluded: usize,
}

/// Masks after removing the smallest surviving weights.
///
/// The weights kept number `⌊(1 − fraction)·m⌋` over the pooled unmasked
/// weights (global) or per layer. Equal magnitudes are removed in ascending
/// `(layer, row, column)` order.
pub fn magnitude_prune(net: &Network, fraction: f64, scope: PruneScope) -> Result<Vec<Array2<bool>>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidPruneFraction(fraction));
    }
    let mut masks = net.masks();
    let candidates = |layers: std::ops::Range<usize>| -> Vec<(f64, usize, usize)> {
        let mut c = Vec::new();
        for l in layers {
            let layer = &net.layers()[l];
            for ((idx, &w), &m) in layer.weights().iter().enumerate().zip(layer.mask().iter()) {
                if m {
                    c.push((w.abs(), l, idx));
                }
            }
        }
        c
    };
    let mut remove = |mut c: Vec<(f64, usize, usize)>, drop: usize| {
        let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        };
        if drop < c.len() && drop > 0 {
            c.select_nth_unstable_by(drop - 1, cmp);
        }
        for &(_, l, idx) in &c[..drop] {
            let cols = masks[l].ncols();
            masks[l][[idx / cols, idx % cols]] = false;
        }
    };
    match scope {
        PruneScope::Global => {
            let c = candidates(0..net.layers().len());
            let keep = surviving_after(c.len(), fraction);
            if keep == 0 {
                return Err(Error::NothingLeft);
            }
            let drop = c.len() - keep;
            remove(c, drop);
        }
        PruneScope::PerLayer => {
            let mut plan = Vec::new();
            for l in 0..net.layers().len() {
                let c = candidates(l..l + 1);
                let keep = surviving_after(c.len(), fraction);
                if keep == 0 {
                    return Err(Error::EmptyLayer { layer: l });
                }
                let drop = c.len() - keep;
                plan.push((c, drop));
            }
            for (c, drop) in plan {
                remove(c, drop);
            }
        }
    }
    Ok(masks)
}

/// Reset surviving weights and all biases to the checkpoint; masks are kept
/// and masked weights stay zero.
pub fn rewind(net: &Network, ckpt: &Checkpoint) -> Result<Network> {
    Ok(Network::from_params(net.arch(), ckpt.layers.clone(), Some(net.masks()))?.with_seed(net.seed()))
}

fn pct(net: &Network) -> f64 {
    100.0 * net.unmasked_count() as f64 / net.weight_count() as f64
}

/// One IMP trial on the dataset's train/test splits.
pub fn imp_run(arch: &NetworkArch, data: &Dataset, cfg: &ImpConfig) -> Result<TrialResult> {
    imp_run_on(arch, data.train.labeled(), data.test.labeled(), cfg)
}

/// IMP on explicit splits. Initial weights are seeded from `cfg.train.seed`.
pub fn imp_run_on(arch: &NetworkArch, train_set: Labeled<'_>, test_set: Labeled<'_>, cfg: &ImpConfig) -> Result<TrialResult> {
    cfg.validate()?;
    cfg.train.validate(train_set.len())?;
    let init = Network::init(arch, seed::stream(cfg.train.seed, "init"))?;
    let mut result = TrialResult { seed: cfg.train.seed, dense_accuracy: 0.0, levels: Vec::new(), status: TrialStatus::Ok };

    let dense = match train(init, train_set, &cfg.train) {
        Ok(out) => out,
        Err(Error::Diverged { step }) => {
            log::warn!("seed {}: dense training diverged at step {step}", cfg.train.seed);
            result.status = TrialStatus::Diverged;
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    let ckpt = dense.checkpoint;
    let mut net = dense.network;
    result.dense_accuracy = evaluate(&net, test_set)?;
    result.levels.push(Level {
        weights_remaining_pct: pct(&net),
        test_accuracy: result.dense_accuracy,
        weights_remaining: net.unmasked_count(),
    });

    for level in 1..=cfg.n_iterations {
        let masks = magnitude_prune(&net, cfg.prune_fraction_per_iter, cfg.scope)?;
        net.set_masks(masks)?;
        let rewound = rewind(&net, &ckpt)?;
        net = match resume(rewound, train_set, &cfg.train, ckpt.step) {
            Ok((n, _)) => n,
            Err(Error::Diverged { step }) => {
                log::warn!("seed {}: level {level} diverged at step {step}", cfg.train.seed);
                result.status = TrialStatus::Diverged;
                return Ok(result);
            }
            Err(e) => return Err(e),
        };
        let acc = evaluate(&net, test_set)?;
        log::debug!("seed {} level {level}: {:.3}% -> {acc:.4}", cfg.train.seed, pct(&net));
        result.levels.push(Level { weights_remaining_pct: pct(&net), test_accuracy: acc, weights_remaining: net.unmasked_count() });
    }
    Ok(result)
}

/// Lowest weights-remaining percentage among pruned levels whose accuracy is
/// at least the dense accuracy. `None` when nothing matches or the trial
/// diverged.
pub fn min_matching_weights(trial: &TrialResult) -> Option<f64> {
    if trial.status != TrialStatus::Ok {
        return None;
    }
    trial
        .levels
        .iter()
        .skip(1)
        .filter(|l| l.test_accuracy >= trial.dense_accuracy)
        .map(|l| l.weights_remaining_pct)
        .min_by(f64::total_cmp)
}

/// Mean and population std of per-seed minima over usable trials.
pub fn aggregate_prunability(trials: &[TrialResult]) -> Result<PrunabilityResult> {
    let mins: Vec<f64> = trials.iter().filter_map(min_matching_weights).collect();
    if mins.is_empty() {
        return Err(Error::NoUsableTrials);
    }
    let n = mins.len() as f64;
    let mean = mins.iter().sum::<f64>() / n;
    let std = (mins.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(PrunabilityResult { excluded: trials.len() - mins.len(), per_seed_min_matching_pct: mins, mean, std })
}

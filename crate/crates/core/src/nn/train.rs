use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{argmax, Checkpoint, Network, Workspace};
use crate::error::{Error, Result};
use crate::seed;

/// Inputs (`n × input_dim`) with their class labels.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub labels: &'a [u8],
}

impl<'a> Labeled<'a> {
    pub fn new(inputs: ArrayView2<'a, f64>, labels: &'a [u8]) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::LengthMismatch { left: inputs.nrows(), right: labels.len() });
        }
        Ok(Labeled { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Mini-batch SGD settings. Defaults: lr 0.1, batch 128, 20 epochs, rewind
/// at the end of the first epoch of a 50,000-sample training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rewind_step: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 128,
            epochs: 20,
            rewind_step: steps_per_epoch(50_000, 128),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn total_steps(&self, n: usize) -> usize {
        self.epochs * steps_per_epoch(n, self.batch_size)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidTrainConfig(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidTrainConfig("batch_size and epochs must be positive".into()));
        }
        let total = self.total_steps(n);
        if self.rewind_step >= total {
            return Err(Error::InvalidTrainConfig(format!(
                "rewind_step {} must be below the {total} total training steps",
                self.rewind_step
            )));
        }
        Ok(())
    }
}

/// Number of mini-batches per epoch; the last batch may be partial.
pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Running accuracy on the training batches seen during the epoch.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
}

/// Train from step 0, capturing the parameters at `cfg.rewind_step`.
pub fn train(net: Network, data: Labeled<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut checkpoint = None;
    let (network, history) = run(net, data, cfg, 0, &mut checkpoint)?;
    Ok(TrainOutcome { network, checkpoint: checkpoint.expect("rewind_step < total steps"), history })
}

/// Continue training from `start_step` to the end of the schedule.
///
/// The shuffled order of every epoch depends only on `(cfg.seed, epoch)`, so
/// resuming from a checkpoint replays exactly the batches an uninterrupted run
/// would have seen from that step on.
pub fn resume(net: Network, data: Labeled<'_>, cfg: &TrainConfig, start_step: usize) -> Result<(Network, Vec<EpochStats>)> {
    run(net, data, cfg, start_step, &mut None)
}

fn epoch_order(cfg: &TrainConfig, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[epoch as u64])));
    order
}

fn run(
    mut net: Network,
    data: Labeled<'_>,
    cfg: &TrainConfig,
    start_step: usize,
    checkpoint: &mut Option<Checkpoint>,
) -> Result<(Network, Vec<EpochStats>)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.inputs.ncols() != net.arch().input_dim {
        return Err(Error::DimensionMismatch { expected: net.arch().input_dim, got: data.inputs.ncols() });
    }
    let classes = net.arch().output_dim;
    if let Some(&bad) = data.labels.iter().find(|&&y| y as usize >= classes) {
        return Err(Error::LabelOutOfRange { label: bad as usize, classes });
    }
    cfg.validate(n)?;

    let spe = steps_per_epoch(n, cfg.batch_size);
    let total = cfg.total_steps(n);
    let mut ws = Workspace::new(&net, cfg.batch_size.min(n));
    let mut history = Vec::new();
    let mut labels = vec![0u8; cfg.batch_size];
    let mut step = start_step;
    while step < total {
        let epoch = step / spe;
        let order = epoch_order(cfg, epoch, n);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for pos in (step % spe)..spe {
            if step == cfg.rewind_step && checkpoint.is_none() {
                *checkpoint = Some(net.checkpoint(step));
            }
            let rows = &order[pos * cfg.batch_size..((pos + 1) * cfg.batch_size).min(n)];
            ws.load(&data.inputs, rows);
            for (dst, &r) in labels.iter_mut().zip(rows) {
                *dst = data.labels[r];
            }
            let (loss, hits) = ws.step(&net, &labels[..rows.len()]);
            if !loss.is_finite() {
                return Err(Error::Diverged { step });
            }
            ws.apply_sgd(&mut net, cfg.learning_rate);
            loss_sum += loss;
            correct += hits;
            seen += rows.len();
            step += 1;
        }
        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / seen as f64,
            train_accuracy: correct as f64 / seen as f64,
        });
    }
    Ok((net, history))
}

/// Fraction of rows whose argmax prediction equals the label. Argmax ties
/// resolve to the lower class index.
pub fn evaluate(net: &Network, data: Labeled<'_>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let logits = net.forward(data.inputs)?;
    let correct = logits
        .rows()
        .into_iter()
        .zip(data.labels)
        .filter(|(row, &y)| argmax(row.as_slice().expect("row-major logits")) == y as usize)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

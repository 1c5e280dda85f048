//! Spearman rank correlation and Monte Carlo propagation of per-cell trial
//! spread into a distribution of correlation coefficients.

mod fixtures;

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use fixtures::{fixture, fixture_axis, FIXTURE_NAMES};

/// Ascending 1-based ranks; tied values share the mean of their positions.
pub fn rank_with_ties(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of the rank vectors. `Ok(None)` when either list is
/// constant.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<Option<f64>> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch { left: xs.len(), right: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewValues { needed: 2, got: xs.len() });
    }
    Ok(pearson(&rank_with_ties(xs), &rank_with_ties(ys)))
}

/// One row of a weights-remaining table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub group_label: String,
    #[serde(rename = "dimension")]
    pub dimension_value: u64,
    #[serde(rename = "mean")]
    pub mean_pct: f64,
    #[serde(rename = "std")]
    pub std_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum McMode {
    /// All rows form one population.
    #[default]
    Pooled,
    /// Rollouts run separately per `group_label`; each rollout's sample is the
    /// mean of the defined per-group coefficients.
    PerGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n_outcomes: usize,
    pub n_rollouts: usize,
    pub seed: u64,
    pub mode: McMode,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { n_outcomes: 1000, n_rollouts: 5000, seed: 0, mode: McMode::Pooled }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho_mean: f64,
    /// Population standard deviation of `samples`.
    pub rho_std: f64,
    pub samples: Vec<f64>,
    /// Rollouts whose coefficient was undefined (constant ranks); not in `samples`.
    pub undefined_rollouts: usize,
    pub config: McConfig,
}

fn distinct_dims(rows: &[&GroupStat]) -> usize {
    let mut dims: Vec<u64> = rows.iter().map(|g| g.dimension_value).collect();
    dims.sort_unstable();
    dims.dedup();
    dims.len()
}

/// One simulated experiment set: `n` rows picked uniformly with replacement,
/// each outcome drawn from `Normal(mean, std)`.
fn rollout(rows: &[&GroupStat], n: usize, sub_seed: u64) -> Option<f64> {
    let mut rng = seed::rng(sub_seed);
    let mut dims = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let g = rows[rng.random_range(0..rows.len())];
        let e: f64 = rng.sample(StandardNormal);
        dims.push(g.dimension_value as f64);
        values.push(g.mean_pct + g.std_pct * e);
    }
    pearson(&rank_with_ties(&dims), &rank_with_ties(&values))
}

/// Monte Carlo distribution of Spearman's rho between dimensionality and
/// weights remaining. Rollout `r` uses sub-seed `derive(seed, [r])` (per-group
/// mode: `derive(seed, [r, g])`), so results do not depend on thread count.
pub fn mc_correlation(groups: &[GroupStat], cfg: &McConfig) -> Result<CorrelationReport> {
    if cfg.n_outcomes < 2 || cfg.n_rollouts == 0 {
        return Err(Error::TooFewValues { needed: 2, got: cfg.n_outcomes.min(cfg.n_rollouts) });
    }
    if let Some(bad) = groups.iter().find(|g| !(g.std_pct >= 0.0 && g.mean_pct.is_finite() && g.std_pct.is_finite())) {
        return Err(Error::InvalidSpec(format!("group `{}` has invalid mean/std", bad.group_label)));
    }
    let all: Vec<&GroupStat> = groups.iter().collect();
    if distinct_dims(&all) < 2 {
        return Err(Error::SingleDimension);
    }
    let results: Vec<Option<f64>> = match cfg.mode {
        McMode::Pooled => (0..cfg.n_rollouts)
            .into_par_iter()
            .map(|r| rollout(&all, cfg.n_outcomes, seed::derive(cfg.seed, &[r as u64])))
            .collect(),
        McMode::PerGroup => {
            let mut labels: Vec<&str> = Vec::new();
            for g in groups {
                if !labels.contains(&g.group_label.as_str()) {
                    labels.push(&g.group_label);
                }
            }
            let blocks: Vec<Vec<&GroupStat>> = labels
                .iter()
                .map(|l| groups.iter().filter(|g| g.group_label == *l).collect::<Vec<_>>())
                .filter(|b| distinct_dims(b) >= 2)
                .collect();
            if blocks.is_empty() {
                return Err(Error::SingleDimension);
            }
            (0..cfg.n_rollouts)
                .into_par_iter()
                .map(|r| {
                    let rhos: Vec<f64> = blocks
                        .iter()
                        .enumerate()
                        .filter_map(|(g, b)| rollout(b, cfg.n_outcomes, seed::derive(cfg.seed, &[r as u64, g as u64])))
                        .collect();
                    (!rhos.is_empty()).then(|| rhos.iter().sum::<f64>() / rhos.len() as f64)
                })
                .collect()
        }
    };
    let samples: Vec<f64> = results.iter().flatten().copied().collect();
    if samples.is_empty() {
        return Err(Error::NoUsableTrials);
    }
    let (rho_mean, rho_std) = mean_std(&samples);
    Ok(CorrelationReport { rho_mean, rho_std, undefined_rollouts: results.len() - samples.len(), samples, config: cfg.clone() })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub bin_center: f64,
    pub count: usize,
}

/// Equal-width bins over `[-1, 1]`; `1.0` lands in the top bin.
pub fn emit_histogram(report: &CorrelationReport, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::TooFewValues { needed: 1, got: 0 });
    }
    let width = 2.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in &report.samples {
        let idx = (((s + 1.0) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| {
            let lo = -1.0 + i as f64 * width;
            let hi = if i + 1 == bins { 1.0 } else { -1.0 + (i + 1) as f64 * width };
            HistogramBin { bin_lo: lo, bin_hi: hi, bin_center: (lo + hi) / 2.0, count }
        })
        .collect())
}

/// Read a `group_label,dimension,mean,std` CSV.
pub fn read_group_stats(path: &Path) -> Result<Vec<GroupStat>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<GroupStat>, _>>()?;
    Ok(rows)
}

pub fn write_group_stats(path: &Path, rows: &[GroupStat]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram(path: &Path, bins: &[HistogramBin]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for b in bins {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(label: &str, dim: u64, mean: f64, std: f64) -> GroupStat {
        GroupStat { group_label: label.into(), dimension_value: dim, mean_pct: mean, std_pct: std }
    }

    #[test]
    fn rank_fixtures() {
        assert_eq!(rank_with_ties(&[10.0, 20.0, 30.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(rank_with_ties(&[5.0, 5.0]), vec![1.5, 1.5]);
        assert_eq!(rank_with_ties(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_fixtures() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert_eq!(spearman_rho(&xs, &sq).unwrap(), Some(1.0));
        assert_eq!(spearman_rho(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap(), Some(-1.0));
        // d = [1,-1,1,-1]: 1 - 6*4/(4*15) = 0.6
        let rho = spearman_rho(&xs, &[2.0, 1.0, 4.0, 3.0]).unwrap().unwrap();
        assert!((rho - 0.6).abs() < 1e-12);
        assert_eq!(spearman_rho(&xs, &[1.0; 4]).unwrap(), None);
        assert!(spearman_rho(&xs, &[1.0]).is_err());
        assert!(spearman_rho(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn noiseless_monotone_table_gives_exact_one() {
        let rows = vec![g("a", 1, 1.0, 0.0), g("a", 2, 2.0, 0.0), g("a", 3, 3.0, 0.0)];
        let cfg = McConfig { n_outcomes: 50, n_rollouts: 40, ..McConfig::default() };
        let rep = mc_correlation(&rows, &cfg).unwrap();
        assert!(rep.samples.iter().all(|&s| s == 1.0));
        assert_eq!((rep.rho_mean, rep.rho_std), (1.0, 0.0));
        let hist = emit_histogram(&rep, 4).unwrap();
        assert_eq!(hist.iter().map(|b| b.count).collect::<Vec<_>>(), vec![0, 0, 0, 40]);
        assert_eq!(hist[0].bin_lo, -1.0);
        assert_eq!(hist[3].bin_hi, 1.0);
    }

    #[test]
    fn mc_is_deterministic_and_rejects_single_dimension() {
        let rows = fixture("table1").unwrap();
        let cfg = McConfig { n_outcomes: 100, n_rollouts: 30, seed: 4, ..McConfig::default() };
        assert_eq!(mc_correlation(&rows, &cfg).unwrap(), mc_correlation(&rows, &cfg).unwrap());
        let flat = vec![g("a", 8, 1.0, 0.1), g("b", 8, 2.0, 0.1)];
        assert!(matches!(mc_correlation(&flat, &cfg), Err(Error::SingleDimension)));
    }

    #[test]
    fn per_group_mode_skips_flat_groups() {
        let rows = fixture("table3").unwrap();
        let cfg = McConfig { n_outcomes: 200, n_rollouts: 20, mode: McMode::PerGroup, ..McConfig::default() };
        let rep = mc_correlation(&rows, &cfg).unwrap();
        assert_eq!(rep.samples.len() + rep.undefined_rollouts, 20);
        assert!(rep.samples.iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn group_stat_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = fixture("table2").unwrap();
        write_group_stats(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("group_label,dimension,mean,std\n"));
        assert_eq!(read_group_stats(&path).unwrap(), rows);
    }
}

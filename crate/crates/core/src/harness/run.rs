use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ArchSpec, ExperimentConfig, SweepAxis};
use crate::datagen::{generate, Dataset};
use crate::error::{Error, Result};
use crate::nn::NetworkArch;
use crate::pruning::{aggregate_prunability, imp_run, ImpConfig, TrialResult, TrialStatus};
use crate::seed;

/// Caps the worker count no matter what `--workers` asks for.
pub const MAX_WORKERS_ENV: &str = "PRUNELAB_MAX_WORKERS";

pub const TRIALS_DIR: &str = "trials";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PRUNABILITY_FILE: &str = "prunability.csv";
pub const CONFIG_FILE: &str = "config.toml";

/// Requested workers (default: available cores), capped by `PRUNELAB_MAX_WORKERS`.
pub fn resolve_workers(requested: Option<usize>) -> Result<usize> {
    if requested == Some(0) {
        return Err(Error::config("--workers", "must be at least 1"));
    }
    let mut n = requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Ok(raw) = std::env::var(MAX_WORKERS_ENV) {
        let cap: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| Error::config(MAX_WORKERS_ENV, format!("expected a positive integer, got `{raw}`")))?;
        n = n.min(cap);
    }
    Ok(n)
}

/// One persisted IMP trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// Hash of everything the trial depends on; a mismatch forces a re-run.
    pub fingerprint: String,
    pub arch: NetworkArch,
    pub arch_label: String,
    pub axis: SweepAxis,
    pub dimension: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub dataset_seed: u64,
    pub dataset_attempt: usize,
    pub imp: ImpConfig,
    pub elapsed_seconds: f64,
    pub result: TrialResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Ok,
    Diverged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub arch_label: String,
    pub dimension: usize,
    pub seed_index: usize,
    pub seed: u64,
    /// Relative to the run directory.
    pub path: String,
    pub status: EntryStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialEntry>,
    /// `label/axis+value` cells where no trial produced a matching level.
    pub cells_without_match: Vec<String>,
    /// Sum of the per-trial `elapsed_seconds` recorded in the trial files.
    pub trial_seconds_total: f64,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Format { path: path.display().to_string(), message: format!("cannot read manifest: {e}") })?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

impl RunSummary {
    pub fn partial_failure(&self) -> bool {
        self.failed > 0
    }
}

pub(crate) struct TrialKey<'a> {
    pub arch: &'a ArchSpec,
    pub dimension: usize,
    pub seed_index: usize,
}

pub(crate) fn trial_keys(cfg: &ExperimentConfig) -> Vec<TrialKey<'_>> {
    let mut keys = Vec::new();
    for &dimension in &cfg.dimension_values {
        for arch in &cfg.architectures {
            for seed_index in 0..cfg.n_seeds {
                keys.push(TrialKey { arch, dimension, seed_index });
            }
        }
    }
    keys
}

pub(crate) fn cell_name(cfg: &ExperimentConfig, label: &str, dimension: usize) -> String {
    format!("{label}/{}{dimension}", cfg.sweep_axis.name())
}

pub(crate) fn trial_rel_path(cfg: &ExperimentConfig, key: &TrialKey<'_>) -> String {
    format!("{TRIALS_DIR}/{}/seed{}.json", cell_name(cfg, &key.arch.label(), key.dimension), key.seed_index)
}

fn fingerprint(cfg: &ExperimentConfig, key: &TrialKey<'_>) -> String {
    let mut stable = cfg.clone();
    stable.output_dir = PathBuf::new();
    stable.analysis = Default::default();
    let text = serde_json::to_string(&(stable, key.arch.label(), key.dimension, key.seed_index)).expect("serializable");
    format!("{:016x}", seed::fnv1a(text.as_bytes()))
}

pub(crate) fn read_trial(path: &Path) -> Result<TrialRecord> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.display().to_string(), message: e.to_string() })
}

/// Write through a temporary file so readers never see a partial document.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn run_trial(cfg: &ExperimentConfig, key: &TrialKey<'_>, data: &Dataset, fp: String) -> Result<TrialRecord> {
    let arch = key.arch.resolve(data.input_dim())?;
    let seed = cfg.trial_seed(key.dimension, key.arch, key.seed_index);
    let mut imp = cfg.imp.clone();
    imp.train.seed = seed;
    let start = Instant::now();
    let result = imp_run(&arch, data, &imp)?;
    Ok(TrialRecord {
        fingerprint: fp,
        arch_label: arch.label(),
        arch,
        axis: cfg.sweep_axis,
        dimension: key.dimension,
        seed_index: key.seed_index,
        seed,
        dataset_seed: data.spec().seed,
        dataset_attempt: data.provenance.attempt,
        imp,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        result,
    })
}

/// Run every missing trial of the sweep, then write `manifest.json`,
/// `prunability.csv` and the resolved `config.toml` under `cfg.output_dir`.
///
/// Trials whose file exists with a matching fingerprint are skipped. A failed
/// trial is recorded in the manifest and does not stop the sweep.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<RunSummary> {
    cfg.validate()?;
    let run_dir = cfg.output_dir.clone();
    std::fs::create_dir_all(run_dir.join(TRIALS_DIR))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config("--workers", e.to_string()))?;

    let keys = trial_keys(cfg);
    let mut errors: Vec<Option<String>> = vec![None; keys.len()];
    let (mut executed, mut skipped) = (0, 0);
    for &dimension in &cfg.dimension_values {
        let pending: Vec<(usize, String)> = keys
            .iter()
            .enumerate()
            .filter(|(_, k)| k.dimension == dimension)
            .filter_map(|(i, k)| {
                let fp = fingerprint(cfg, k);
                match read_trial(&run_dir.join(trial_rel_path(cfg, k))) {
                    Ok(rec) if rec.fingerprint == fp => None,
                    _ => Some((i, fp)),
                }
            })
            .collect();
        skipped += keys.iter().filter(|k| k.dimension == dimension).count() - pending.len();
        if pending.is_empty() {
            continue;
        }
        let spec = cfg.dataset_spec(dimension);
        let started = Instant::now();
        let data = match generate(&spec) {
            Ok(d) => Arc::new(d),
            Err(e) => {
                log::error!("{} = {dimension}: dataset generation failed: {e}", cfg.sweep_axis.name());
                for (i, _) in &pending {
                    errors[*i] = Some(format!("dataset generation failed: {e}"));
                }
                continue;
            }
        };
        log::info!(
            "{} = {dimension}: dataset ready in {:.1}s, {} trial(s) to run",
            cfg.sweep_axis.name(),
            started.elapsed().as_secs_f64(),
            pending.len()
        );
        let outcomes: Vec<(usize, Result<()>)> = pool.install(|| {
            pending
                .par_iter()
                .map(|(i, fp)| {
                    let key = &keys[*i];
                    let out = run_trial(cfg, key, &data, fp.clone()).and_then(|rec| {
                        log::info!(
                            "{} seed{}: {:?}, {} levels, {:.1}s",
                            cell_name(cfg, &rec.arch_label, dimension),
                            key.seed_index,
                            rec.result.status,
                            rec.result.levels.len(),
                            rec.elapsed_seconds
                        );
                        let mut json = serde_json::to_vec_pretty(&rec)?;
                        json.push(b'\n');
                        write_atomic(&run_dir.join(trial_rel_path(cfg, key)), &json)
                    });
                    (*i, out)
                })
                .collect()
        });
        for (i, out) in outcomes {
            executed += 1;
            if let Err(e) = out {
                log::error!("{}: {e}", trial_rel_path(cfg, &keys[i]));
                errors[i] = Some(e.to_string());
            }
        }
    }

    let mut entries = Vec::with_capacity(keys.len());
    let mut total_seconds = 0.0;
    let mut failed = 0;
    for (key, err) in keys.iter().zip(errors) {
        let path = trial_rel_path(cfg, key);
        let (status, error) = match err {
            Some(e) => (EntryStatus::Failed, Some(e)),
            None => match read_trial(&run_dir.join(&path)) {
                Ok(rec) => {
                    total_seconds += rec.elapsed_seconds;
                    match rec.result.status {
                        TrialStatus::Ok => (EntryStatus::Ok, None),
                        TrialStatus::Diverged => (EntryStatus::Diverged, None),
                    }
                }
                Err(e) => (EntryStatus::Failed, Some(e.to_string())),
            },
        };
        if status == EntryStatus::Failed {
            failed += 1;
        }
        entries.push(TrialEntry {
            arch_label: key.arch.label(),
            dimension: key.dimension,
            seed_index: key.seed_index,
            seed: cfg.trial_seed(key.dimension, key.arch, key.seed_index),
            path,
            status,
            error,
        });
    }

    let table = prunability_table(cfg, &run_dir)?;
    let mut manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.master_seed,
        config: cfg.clone(),
        trials: entries,
        cells_without_match: table.cells_without_match.clone(),
        trial_seconds_total: total_seconds,
    };
    manifest.config.output_dir = PathBuf::from(".");
    write_prunability_csv(&run_dir.join(PRUNABILITY_FILE), &table.rows)?;
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&run_dir.join(MANIFEST_FILE), &json)?;
    write_atomic(&run_dir.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    Ok(RunSummary { manifest, executed, skipped, failed })
}

/// One row of `prunability.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunabilityRow {
    pub group_label: String,
    pub dimension: usize,
    pub mean: f64,
    pub std: f64,
    pub n_used: usize,
    pub n_excluded: usize,
    /// Per-seed minima joined with `;`.
    pub per_seed: String,
}

pub(crate) struct PrunabilityTable {
    pub rows: Vec<PrunabilityRow>,
    pub cells_without_match: Vec<String>,
    pub missing: Vec<String>,
}

/// Trial records of every cell, in sweep order. Missing files are listed.
pub(crate) fn load_cells(cfg: &ExperimentConfig, run_dir: &Path) -> (Vec<(String, usize, Vec<TrialRecord>)>, Vec<String>) {
    let mut cells: Vec<(String, usize, Vec<TrialRecord>)> = Vec::new();
    let mut missing = Vec::new();
    for key in trial_keys(cfg) {
        let label = key.arch.label();
        if !cells.last().is_some_and(|(l, d, _)| *l == label && *d == key.dimension) {
            cells.push((label.clone(), key.dimension, Vec::new()));
        }
        let rel = trial_rel_path(cfg, &key);
        match read_trial(&run_dir.join(&rel)) {
            Ok(rec) => cells.last_mut().expect("pushed above").2.push(rec),
            Err(_) => missing.push(rel),
        }
    }
    (cells, missing)
}

pub(crate) fn prunability_table(cfg: &ExperimentConfig, run_dir: &Path) -> Result<PrunabilityTable> {
    let (cells, missing) = load_cells(cfg, run_dir);
    let mut rows = Vec::new();
    let mut cells_without_match = Vec::new();
    for (label, dimension, recs) in cells {
        let trials: Vec<TrialResult> = recs.into_iter().map(|r| r.result).collect();
        match aggregate_prunability(&trials) {
            Ok(p) => rows.push(PrunabilityRow {
                group_label: label,
                dimension,
                mean: p.mean,
                std: p.std,
                n_used: p.per_seed_min_matching_pct.len(),
                n_excluded: p.excluded,
                per_seed: p.per_seed_min_matching_pct.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";"),
            }),
            Err(Error::NoUsableTrials) => cells_without_match.push(cell_name(cfg, &label, dimension)),
            Err(e) => return Err(e),
        }
    }
    Ok(PrunabilityTable { rows, cells_without_match, missing })
}

pub fn write_prunability_csv(path: &Path, rows: &[PrunabilityRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["group_label", "dimension", "mean", "std", "n_used", "n_excluded", "per_seed"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{cell_name, load_cells, prunability_table, write_prunability_csv, RunManifest, PRUNABILITY_FILE};
use crate::error::{Error, Result};
use crate::stats::{
    emit_histogram, fixture, fixture_axis, mc_correlation, mean_std, write_group_stats, write_histogram, CorrelationReport,
    GroupStat, McConfig, FIXTURE_NAMES,
};

pub const REPORT_FILE: &str = "report.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const GROUPS_FILE: &str = "groups.csv";
pub const CURVES_DIR: &str = "curves";

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// `fixture:<name>` or the run directory.
    pub source: String,
    pub axis: String,
    pub groups: Vec<GroupStat>,
    /// Cells left out because no trial matched the dense accuracy.
    pub excluded_cells: Vec<String>,
    #[serde(flatten)]
    pub correlation: CorrelationReport,
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    /// Output directory; defaults to `<run_dir>/analysis` or `analysis/<fixture>`.
    pub out: Option<PathBuf>,
    /// Replaces the Monte Carlo settings of the run config.
    pub mc: Option<McConfig>,
    pub bins: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub report: AnalysisReport,
    pub out_dir: PathBuf,
}

/// Correlation analysis of a finished run directory or a built-in fixture.
///
/// Writes `report.json`, `histogram.csv` and `groups.csv`; for runs also the
/// recomputed `prunability.csv` and one accuracy curve per cell.
pub fn analyze(target: &str, opts: &AnalyzeOptions) -> Result<AnalysisOutput> {
    if FIXTURE_NAMES.contains(&target) {
        let groups = fixture(target)?;
        let mc = opts.mc.clone().unwrap_or_default();
        let out_dir = opts.out.clone().unwrap_or_else(|| PathBuf::from("analysis").join(target));
        let report = AnalysisReport {
            source: format!("fixture:{target}"),
            axis: fixture_axis(target)?.to_string(),
            correlation: mc_correlation(&groups, &mc)?,
            groups,
            excluded_cells: Vec::new(),
        };
        write_outputs(&report, &out_dir, opts.bins.unwrap_or(40))?;
        return Ok(AnalysisOutput { report, out_dir });
    }
    let run_dir = PathBuf::from(target);
    if !run_dir.is_dir() {
        return Err(Error::config("target", format!("`{target}` is neither a fixture ({}) nor a run directory", FIXTURE_NAMES.join(", "))));
    }
    let manifest = RunManifest::load(&run_dir)?;
    let cfg = &manifest.config;
    let table = prunability_table(cfg, &run_dir)?;
    if !table.missing.is_empty() {
        return Err(Error::IncompleteRun { dir: run_dir, missing: table.missing });
    }
    let groups: Vec<GroupStat> = table
        .rows
        .iter()
        .map(|r| GroupStat { group_label: r.group_label.clone(), dimension_value: r.dimension as u64, mean_pct: r.mean, std_pct: r.std })
        .collect();
    let mc = opts.mc.clone().unwrap_or_else(|| cfg.analysis.mc.clone());
    let out_dir = opts.out.clone().unwrap_or_else(|| run_dir.join("analysis"));
    let report = AnalysisReport {
        source: run_dir.display().to_string(),
        axis: cfg.sweep_axis.name().to_string(),
        correlation: mc_correlation(&groups, &mc)?,
        groups,
        excluded_cells: table.cells_without_match.clone(),
    };
    write_outputs(&report, &out_dir, opts.bins.unwrap_or(cfg.analysis.histogram_bins))?;
    write_prunability_csv(&out_dir.join(PRUNABILITY_FILE), &table.rows)?;
    emit_curves(cfg, &run_dir, &out_dir.join(CURVES_DIR))?;
    Ok(AnalysisOutput { report, out_dir })
}

fn write_outputs(report: &AnalysisReport, out_dir: &Path, bins: usize) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    std::fs::write(out_dir.join(REPORT_FILE), json)?;
    write_histogram(&out_dir.join(HISTOGRAM_FILE), &emit_histogram(&report.correlation, bins)?)?;
    write_group_stats(&out_dir.join(GROUPS_FILE), &report.groups)?;
    Ok(())
}

/// One row of a per-cell accuracy curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub weights_remaining_pct: f64,
    pub mean_accuracy: f64,
    /// Population std over the trials that reached this level.
    pub std_accuracy: f64,
    pub n_trials: usize,
}

/// Test accuracy against weights remaining, one CSV per (architecture,
/// dimension) under `<out>/`. Levels are matched across seeds by their exact
/// surviving-weight count and sorted by descending percentage.
pub fn emit_plot_data(run_dir: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::load(run_dir)?;
    let out_dir = out.map_or_else(|| run_dir.join(CURVES_DIR), Path::to_path_buf);
    emit_curves(&manifest.config, run_dir, &out_dir)
}

fn emit_curves(cfg: &ExperimentConfig, run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (cells, missing) = load_cells(cfg, run_dir);
    if !missing.is_empty() {
        return Err(Error::IncompleteRun { dir: run_dir.to_path_buf(), missing });
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (label, dimension, recs) in cells {
        let mut points: Vec<(usize, f64, Vec<f64>)> = Vec::new();
        for rec in &recs {
            for level in &rec.result.levels {
                match points.iter_mut().find(|p| p.0 == level.weights_remaining) {
                    Some(p) => p.2.push(level.test_accuracy),
                    None => points.push((level.weights_remaining, level.weights_remaining_pct, vec![level.test_accuracy])),
                }
            }
        }
        points.sort_by(|a, b| b.0.cmp(&a.0));
        let path = out_dir.join(format!("{}.csv", cell_name(cfg, &label, dimension).replace('/', "_")));
        let mut w = csv::Writer::from_path(&path)?;
        if points.is_empty() {
            w.write_record(["weights_remaining_pct", "mean_accuracy", "std_accuracy", "n_trials"])?;
        }
        for (_, pct, accs) in points {
            let (mean, std) = mean_std(&accs);
            w.serialize(CurvePoint { weights_remaining_pct: pct, mean_accuracy: mean, std_accuracy: std, n_trials: accs.len() })?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

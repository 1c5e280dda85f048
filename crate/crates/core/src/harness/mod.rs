//! Sweep configuration, orchestration, persistence and reporting.
//!
//! A run directory holds:
//!
//! ```text
//! config.toml                      resolved configuration
//! manifest.json                    config, trial list with status, totals
//! prunability.csv                  one row per (architecture, value) cell
//! trials/<arch>/<axis><v>/seed<i>.json
//! ```

mod analyze;
mod config;
mod run;

pub use analyze::{analyze, emit_plot_data, AnalysisOutput, AnalysisReport, AnalyzeOptions, CurvePoint, CURVES_DIR, GROUPS_FILE, HISTOGRAM_FILE, REPORT_FILE};
pub use config::{load_config, parse_config, AnalysisConfig, ArchSpec, DataTemplate, ExperimentConfig, FixedDims, SweepAxis};
pub use run::{
    resolve_workers, run_experiment, write_prunability_csv, EntryStatus, PrunabilityRow, RunManifest, RunSummary, TrialEntry,
    TrialRecord, CONFIG_FILE, MANIFEST_FILE, MAX_WORKERS_ENV, PRUNABILITY_FILE, TRIALS_DIR,
};

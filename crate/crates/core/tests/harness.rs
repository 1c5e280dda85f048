use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use prunelab::harness::{
    analyze, emit_plot_data, parse_config, run_experiment, AnalyzeOptions, ExperimentConfig, RunManifest, TrialRecord, MANIFEST_FILE,
};
use prunelab::stats::McConfig;
use prunelab::Error;

fn tiny(dir: &Path, dims: &str, archs: usize) -> ExperimentConfig {
    let arch_lines: String = [[8, 4], [6, 3], [4, 2]][..archs]
        .iter()
        .map(|[p, q]| format!("[[architectures]]\nhidden_dims = [{p}, {q}]\n"))
        .collect();
    let text = format!(
        r#"
sweep_axis = "task"
dimension_values = {dims}
n_seeds = 3
master_seed = 5
output_dir = "{}"
[fixed_dims]
extrinsic = 6
intrinsic = 4
{arch_lines}
[imp]
n_iterations = 3
[imp.train]
epochs = 2
batch_size = 50
[data]
n_train = 200
n_test = 100
[analysis]
histogram_bins = 10
[analysis.mc]
n_outcomes = 100
n_rollouts = 50
"#,
        dir.display()
    );
    parse_config(&text).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn sweep_counts_idempotence_and_partial_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path(), "[1, 2, 3, 4]", 3);
    assert_eq!(cfg.imp.train.rewind_step, 4);
    let first = run_experiment(&cfg, 2).unwrap();
    assert_eq!((first.executed, first.skipped, first.failed), (36, 0, 0));
    let files = snapshot(tmp.path());
    let trial_files = files.keys().filter(|p| p.starts_with("trials")).count();
    assert_eq!(trial_files, 36);
    let table = std::fs::read_to_string(tmp.path().join("prunability.csv")).unwrap();
    let rows = table.lines().count() - 1;
    assert_eq!(rows + first.manifest.cells_without_match.len(), 12);

    let again = run_experiment(&cfg, 2).unwrap();
    assert_eq!((again.executed, again.skipped), (0, 36));
    assert_eq!(snapshot(tmp.path()), files);

    let victim = tmp.path().join(&first.manifest.trials[7].path);
    std::fs::remove_file(&victim).unwrap();
    let err = analyze(tmp.path().to_str().unwrap(), &AnalyzeOptions::default()).unwrap_err();
    match err {
        Error::IncompleteRun { missing, .. } => assert_eq!(missing, vec![first.manifest.trials[7].path.clone()]),
        other => panic!("{other:?}"),
    }
    let third = run_experiment(&cfg, 1).unwrap();
    assert_eq!((third.executed, third.skipped), (1, 35));
    let key = Path::new(&first.manifest.trials[7].path);
    let untimed = |bytes: &[u8]| {
        let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
        v.as_object_mut().unwrap().remove("elapsed_seconds");
        v
    };
    assert_eq!(untimed(&snapshot(tmp.path())[key]), untimed(&files[key]));
}

#[test]
fn seeds_and_fingerprints_change_with_master_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path(), "[2, 4]", 1);
    let a = run_experiment(&cfg, 1).unwrap();
    cfg.master_seed += 1;
    let b = run_experiment(&cfg, 1).unwrap();
    assert_eq!(b.executed, 6);
    assert_ne!(a.manifest.trials[0].seed, b.manifest.trials[0].seed);
    let seeds: std::collections::BTreeSet<u64> = b.manifest.trials.iter().map(|t| t.seed).collect();
    assert_eq!(seeds.len(), 6);
}

#[test]
fn analysis_and_curves_are_recomputable_from_trial_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path(), "[1, 2, 3, 4]", 1);
    let run = run_experiment(&cfg, 1).unwrap();
    let manifest = RunManifest::load(tmp.path()).unwrap();
    assert_eq!(manifest.trials, run.manifest.trials);
    assert!(tmp.path().join(MANIFEST_FILE).exists());

    let curves = emit_plot_data(tmp.path(), None).unwrap();
    assert_eq!(curves.len(), 4);
    let records: Vec<TrialRecord> = manifest
        .trials
        .iter()
        .filter(|t| t.dimension == 1)
        .map(|t| serde_json::from_str(&std::fs::read_to_string(tmp.path().join(&t.path)).unwrap()).unwrap())
        .collect();
    let dense_mean = records.iter().map(|r| r.result.dense_accuracy).sum::<f64>() / records.len() as f64;
    let mut rdr = csv::Reader::from_path(&curves[0]).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["weights_remaining_pct", "mean_accuracy", "std_accuracy", "n_trials"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(&rows[0][0], "100.0");
    assert!((rows[0][1].parse::<f64>().unwrap() - dense_mean).abs() < 1e-12);
    assert_eq!(&rows[0][3], "3");
    let pcts: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(pcts.windows(2).all(|w| w[0] > w[1]));

    match analyze(tmp.path().to_str().unwrap(), &AnalyzeOptions::default()) {
        Ok(out) => {
            let rep = out.report;
            assert_eq!(rep.groups.len() + rep.excluded_cells.len(), 4);
            assert_eq!(rep.correlation.samples.len() + rep.correlation.undefined_rollouts, 50);
            for f in ["report.json", "histogram.csv", "groups.csv", "prunability.csv"] {
                assert!(out.out_dir.join(f).exists(), "{f}");
            }
        }
        Err(Error::SingleDimension) => assert!(run.manifest.cells_without_match.len() >= 3),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn single_value_runs_cannot_be_correlated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path(), "[3]", 1);
    run_experiment(&cfg, 1).unwrap();
    assert!(matches!(analyze(tmp.path().to_str().unwrap(), &AnalyzeOptions::default()), Err(Error::SingleDimension)));
}

#[test]
fn fixture_analysis_writes_report_and_histogram() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = AnalyzeOptions {
        out: Some(tmp.path().to_path_buf()),
        mc: Some(McConfig { n_outcomes: 200, n_rollouts: 100, ..McConfig::default() }),
        bins: Some(8),
    };
    let out = analyze("table1", &opts).unwrap();
    assert_eq!(out.report.axis, "extrinsic");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["samples"].as_array().unwrap().len(), 100);
    assert_eq!(json["config"]["n_rollouts"], 100);
    let hist = std::fs::read_to_string(tmp.path().join("histogram.csv")).unwrap();
    assert!(hist.starts_with("bin_lo,bin_hi,bin_center,count\n"));
    let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 100);
    assert!(matches!(analyze("table9", &opts), Err(Error::Config { .. })));
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use prunelab::datagen::{generate, resize_dataset, Embedding, TaskDatasetSpec};
use prunelab::harness::{analyze, emit_plot_data, load_config, resolve_workers, run_experiment, AnalyzeOptions};
use prunelab::stats::{fixture, write_group_stats, GroupStat, McConfig, McMode, FIXTURE_NAMES};
use prunelab::Error;

#[derive(Parser)]
#[command(name = "prunelab", version, about = "Prunability of MLPs under controlled input dimensionality")]
#[command(after_help = "Environment:\n  PRUNELAB_MAX_WORKERS  upper bound on worker threads\n  RUST_LOG              log filter (default: info)\n\nExit codes: 0 success, 1 usage or config error, 2 sweep finished with failed trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one dataset
    Gen(GenArgs),
    /// Run an IMP sweep
    Run(RunArgs),
    /// Monte Carlo correlation analysis of a run directory or fixture
    Analyze(AnalyzeArgs),
    /// Accuracy vs weights-remaining curves of a run directory
    Plotdata(PlotArgs),
    /// Print or export the built-in weights-remaining tables
    Fixtures(FixtureArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Dataset TOML with a [dataset] table and an optional [resize] table
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "dataset")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, requires = "intrinsic")]
    extrinsic: Option<usize>,
    #[arg(long)]
    intrinsic: Option<usize>,
    /// Defaults to the intrinsic dimension
    #[arg(long)]
    task: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long, value_enum)]
    embedding: Option<EmbeddingArg>,
    /// Also write train.csv and test.csv
    #[arg(long)]
    csv: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingArg {
    Linear,
    NonlinearManifold,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides master_seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides output_dir
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Run directory or fixture name (table1, table2, table3)
    target: String,
    /// TOML with Monte Carlo settings (`n_outcomes`, `n_rollouts`, `seed`, `mode`)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long)]
    outcomes: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Pooled,
    PerGroup,
}

#[derive(Args)]
struct PlotArgs {
    run_dir: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    /// One fixture; all three when omitted
    name: Option<String>,
    /// Write <name>.csv files here instead of printing
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenConfig {
    dataset: TaskDatasetSpec,
    resize: Option<ResizeConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResizeConfig {
    source_shape: [usize; 3],
    target: [usize; 2],
}

enum Failure {
    Usage(String),
    Partial(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {}", path.display(), e.message())))
}

fn install_pool(workers: Option<usize>) -> Result<usize, Failure> {
    let n = resolve_workers(workers)?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(n)
}

fn cmd_gen(a: GenArgs) -> Result<(), Failure> {
    install_pool(a.workers)?;
    let (mut spec, resize) = match (&a.config, a.extrinsic) {
        (Some(path), None) => {
            let g: GenConfig = read_toml(path)?;
            (g.dataset, g.resize)
        }
        (None, Some(big_d)) => {
            let d = a.intrinsic.expect("clap enforces --intrinsic");
            (TaskDatasetSpec::linear(big_d, d, a.task.unwrap_or(d), 0), None)
        }
        (Some(_), Some(_)) => return Err(Failure::Usage("give either --config or --extrinsic/--intrinsic, not both".into())),
        (None, None) => return Err(Failure::Usage("gen needs --config or --extrinsic and --intrinsic".into())),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.n_train {
        spec.n_train = n;
    }
    if let Some(n) = a.n_test {
        spec.n_test = n;
    }
    if let Some(e) = a.embedding {
        spec.embedding = match e {
            EmbeddingArg::Linear => Embedding::Linear,
            EmbeddingArg::NonlinearManifold => Embedding::NonlinearManifold,
        };
    }
    let mut ds = generate(&spec)?;
    if let Some(r) = resize {
        ds = resize_dataset(&ds, r.source_shape, (r.target[0], r.target[1]))?;
    }
    std::fs::create_dir_all(&a.out).map_err(Error::from)?;
    let path = a.out.join("dataset.bin");
    ds.save(&path)?;
    if a.csv {
        ds.write_csv(&a.out)?;
    }
    println!(
        "wrote {} (train {}x{}, test {}, positive fraction {:.4}, attempt {})",
        path.display(),
        ds.train.len(),
        ds.input_dim(),
        ds.test.len(),
        ds.train.positive_fraction(),
        ds.provenance.attempt
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    let workers = resolve_workers(a.workers)?;
    log::info!("resolved config:\n{}", cfg.to_toml());
    log::info!("{workers} worker(s), output in {}", cfg.output_dir.display());
    let summary = run_experiment(&cfg, workers)?;
    println!(
        "{}: {} trial(s) run, {} skipped, {} failed",
        cfg.output_dir.display(),
        summary.executed,
        summary.skipped,
        summary.failed
    );
    if summary.partial_failure() {
        return Err(Failure::Partial(format!("{} trial(s) failed; see manifest.json", summary.failed)));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalyzeConfig {
    #[serde(default)]
    mc: Option<McConfig>,
    #[serde(default)]
    histogram_bins: Option<usize>,
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), Failure> {
    install_pool(a.workers)?;
    let mut opts = AnalyzeOptions { out: a.out, mc: None, bins: a.bins };
    if let Some(path) = &a.config {
        let c: AnalyzeConfig = read_toml(path)?;
        opts.mc = c.mc;
        opts.bins = opts.bins.or(c.histogram_bins);
    }
    if a.seed.is_some() || a.mode.is_some() || a.rollouts.is_some() || a.outcomes.is_some() {
        let base = match (&opts.mc, FIXTURE_NAMES.contains(&a.target.as_str())) {
            (Some(mc), _) => mc.clone(),
            (None, true) => McConfig::default(),
            (None, false) => prunelab::harness::RunManifest::load(Path::new(&a.target))?.config.analysis.mc,
        };
        opts.mc = Some(McConfig {
            seed: a.seed.unwrap_or(base.seed),
            n_rollouts: a.rollouts.unwrap_or(base.n_rollouts),
            n_outcomes: a.outcomes.unwrap_or(base.n_outcomes),
            mode: match a.mode {
                Some(ModeArg::Pooled) => McMode::Pooled,
                Some(ModeArg::PerGroup) => McMode::PerGroup,
                None => base.mode,
            },
        });
    }
    let out = analyze(&a.target, &opts)?;
    let r = &out.report;
    println!(
        "{} ({} axis): rho = {:.4} ± {:.4} over {} rollouts ({} undefined); written to {}",
        r.source,
        r.axis,
        r.correlation.rho_mean,
        r.correlation.rho_std,
        r.correlation.samples.len(),
        r.correlation.undefined_rollouts,
        out.out_dir.display()
    );
    if !r.excluded_cells.is_empty() {
        println!("cells without a matching level: {}", r.excluded_cells.join(", "));
    }
    Ok(())
}

fn cmd_plotdata(a: PlotArgs) -> Result<(), Failure> {
    let files = emit_plot_data(&a.run_dir, a.out.as_deref())?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn cmd_fixtures(a: FixtureArgs) -> Result<(), Failure> {
    let names: Vec<String> = match a.name {
        Some(n) => vec![n],
        None => FIXTURE_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    for name in names {
        let rows: Vec<GroupStat> = fixture(&name)?;
        match &a.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(Error::from)?;
                let path = dir.join(format!("{name}.csv"));
                write_group_stats(&path, &rows)?;
                println!("{}", path.display());
            }
            None => {
                println!("# {name}");
                let mut w = csv::Writer::from_writer(std::io::stdout());
                for r in &rows {
                    w.serialize(r).map_err(Error::from)?;
                }
                w.flush().map_err(Error::from)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Plotdata(a) => cmd_plotdata(a),
        Command::Fixtures(a) => cmd_fixtures(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Partial(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{Embedding, ManifoldParams, TaskDatasetSpec};
use crate::error::{Error, Result};
use crate::nn::{steps_per_epoch, NetworkArch};
use crate::pruning::ImpConfig;
use crate::seed;
use crate::stats::McConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Extrinsic,
    Intrinsic,
    Task,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Extrinsic => "extrinsic",
            SweepAxis::Intrinsic => "intrinsic",
            SweepAxis::Task => "task",
        }
    }

    /// Word folded into trial and dataset seeds.
    pub fn code(self) -> u64 {
        match self {
            SweepAxis::Extrinsic => 0,
            SweepAxis::Intrinsic => 1,
            SweepAxis::Task => 2,
        }
    }
}

/// The dimensionalities that stay fixed; the swept one must be absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedDims {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extrinsic: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intrinsic: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<usize>,
}

/// Architecture without its input width, which comes from the cell's `D`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub hidden_dims: Vec<usize>,
    #[serde(default = "two")]
    pub output_dim: usize,
}

fn two() -> usize {
    2
}

impl ArchSpec {
    pub fn resolve(&self, input_dim: usize) -> Result<NetworkArch> {
        NetworkArch::new(input_dim, self.hidden_dims.clone(), self.output_dim)
    }

    pub fn label(&self) -> String {
        NetworkArch { input_dim: 1, hidden_dims: self.hidden_dims.clone(), output_dim: self.output_dim, activation: Default::default() }
            .label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataTemplate {
    pub n_train: usize,
    pub n_test: usize,
    pub embedding: Embedding,
    pub manifold: ManifoldParams,
}

impl Default for DataTemplate {
    fn default() -> Self {
        let s = TaskDatasetSpec::linear(1, 1, 1, 0);
        DataTemplate { n_train: s.n_train, n_test: s.n_test, embedding: s.embedding, manifold: s.manifold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub mc: McConfig,
    pub histogram_bins: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { mc: McConfig::default(), histogram_bins: 40 }
    }
}

/// A sweep over one dimensionality × architectures × seeds.
///
/// `imp.train.seed` must stay 0: every trial gets its own seed, see
/// [`ExperimentConfig::trial_seed`]. When `imp.train.rewind_step` is omitted
/// it resolves to one epoch of `data.n_train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sweep_axis: SweepAxis,
    pub dimension_values: Vec<usize>,
    #[serde(default)]
    pub fixed_dims: FixedDims,
    pub architectures: Vec<ArchSpec>,
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub imp: ImpConfig,
    #[serde(default)]
    pub data: DataTemplate,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_seeds() -> usize {
    3
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Parse, resolve defaults and validate an experiment TOML file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: toml::Table = toml::from_str(text).map_err(|e| Error::config("<toml>", e.message().to_string()))?;
    let rewind_given = raw
        .get("imp")
        .and_then(|v| v.get("train"))
        .and_then(|v| v.get("rewind_step"))
        .is_some();
    let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let key = e.span().map(|s| key_at(text, s.start)).unwrap_or_else(|| "<toml>".into());
        Error::config(key, e.message().to_string())
    })?;
    cfg.resolve(rewind_given);
    cfg.validate()?;
    Ok(cfg)
}

/// Best-effort name of the TOML key on the line containing `offset`.
fn key_at(text: &str, offset: usize) -> String {
    let line_start = text[..offset.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    match line.split_once('=') {
        Some((k, _)) => k.trim().to_string(),
        None => line.trim().trim_matches(['[', ']']).to_string(),
    }
}

impl ExperimentConfig {
    fn resolve(&mut self, rewind_given: bool) {
        if !rewind_given {
            self.imp.train.rewind_step = steps_per_epoch(self.data.n_train, self.imp.train.batch_size.max(1));
        }
        if self.sweep_axis != SweepAxis::Task && self.fixed_dims.task.is_none() {
            self.fixed_dims.task = match self.sweep_axis {
                SweepAxis::Intrinsic => None,
                _ => self.fixed_dims.intrinsic,
            };
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(key, msg));
        if self.dimension_values.is_empty() {
            return bad("dimension_values", "must list at least one value".into());
        }
        if self.dimension_values.contains(&0) {
            return bad("dimension_values", "values must be positive".into());
        }
        if self.dimension_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("dimension_values", "values must be strictly increasing".into());
        }
        if self.n_seeds == 0 {
            return bad("n_seeds", "must be at least 1".into());
        }
        if self.architectures.is_empty() {
            return bad("architectures", "must list at least one architecture".into());
        }
        for (i, a) in self.architectures.iter().enumerate() {
            if let Err(e) = a.resolve(1) {
                return bad(&format!("architectures[{i}]"), e.to_string());
            }
        }
        let mut labels: Vec<String> = self.architectures.iter().map(ArchSpec::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("architectures", "duplicate architecture".into());
        }
        let swept = self.sweep_axis.name();
        let given = match self.sweep_axis {
            SweepAxis::Extrinsic => self.fixed_dims.extrinsic,
            SweepAxis::Intrinsic => self.fixed_dims.intrinsic,
            SweepAxis::Task => self.fixed_dims.task,
        };
        if given.is_some() {
            return bad(&format!("fixed_dims.{swept}"), format!("{swept} is the swept axis and cannot be fixed"));
        }
        for (name, v) in [("extrinsic", self.fixed_dims.extrinsic), ("intrinsic", self.fixed_dims.intrinsic)] {
            if name != swept && v.is_none() {
                return bad(&format!("fixed_dims.{name}"), "required for this sweep".into());
            }
        }
        if let Err(e) = self.imp.validate() {
            return bad("imp", e.to_string());
        }
        if self.imp.train.seed != 0 {
            return bad("imp.train.seed", "per-trial seeds are derived from master_seed; leave this unset".into());
        }
        if let Err(e) = self.imp.train.validate(self.data.n_train.max(1)) {
            return bad("imp.train", e.to_string());
        }
        if self.data.n_train == 0 || self.data.n_test == 0 {
            return bad("data", "n_train and n_test must be positive".into());
        }
        for &v in &self.dimension_values {
            if let Err(e) = self.dataset_spec(v).validate() {
                return bad("dimension_values", format!("value {v}: {e}"));
            }
        }
        let mc = &self.analysis.mc;
        if mc.n_outcomes < 2 || mc.n_rollouts == 0 {
            return bad("analysis.mc", "need n_outcomes >= 2 and n_rollouts >= 1".into());
        }
        if self.analysis.histogram_bins == 0 {
            return bad("analysis.histogram_bins", "must be at least 1".into());
        }
        Ok(())
    }

    /// `(D, d, t)` of the cell at sweep value `v`. An unset task dimension
    /// follows the intrinsic one.
    pub fn dims(&self, v: usize) -> (usize, usize, usize) {
        let f = &self.fixed_dims;
        match self.sweep_axis {
            SweepAxis::Extrinsic => (v, f.intrinsic.unwrap_or(0), f.task.or(f.intrinsic).unwrap_or(0)),
            SweepAxis::Intrinsic => (f.extrinsic.unwrap_or(0), v, f.task.unwrap_or(v)),
            SweepAxis::Task => (f.extrinsic.unwrap_or(0), f.intrinsic.unwrap_or(0), v),
        }
    }

    /// Dataset for sweep value `v`, shared by every architecture and seed of
    /// that value. Seed: `derive(master_seed, [axis code, v])`.
    pub fn dataset_spec(&self, v: usize) -> TaskDatasetSpec {
        let (big_d, d, t) = self.dims(v);
        TaskDatasetSpec {
            extrinsic_dim: big_d,
            intrinsic_dim: d,
            task_dim: t,
            n_train: self.data.n_train,
            n_test: self.data.n_test,
            seed: seed::derive(self.master_seed, &[self.sweep_axis.code(), v as u64]),
            embedding: self.data.embedding,
            manifold: self.data.manifold.clone(),
        }
    }

    /// `derive(master_seed, [axis code, v, fnv1a(arch label), seed index])`.
    pub fn trial_seed(&self, v: usize, arch: &ArchSpec, seed_index: usize) -> u64 {
        seed::derive(
            self.master_seed,
            &[self.sweep_axis.code(), v as u64, seed::fnv1a(arch.label().as_bytes()), seed_index as u64],
        )
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TASK: &str = r#"
sweep_axis = "task"
dimension_values = [16, 32, 64, 128]
[fixed_dims]
extrinsic = 1024
intrinsic = 128
[[architectures]]
hidden_dims = [256, 128]
[[architectures]]
hidden_dims = [512, 256]
[[architectures]]
hidden_dims = [1024, 512]
"#;

    #[test]
    fn task_sweep_is_accepted_with_defaults_resolved() {
        let cfg = parse_config(TASK).unwrap();
        assert_eq!(cfg.n_seeds, 3);
        assert_eq!(cfg.imp.train.rewind_step, 391);
        assert_eq!(cfg.dims(16), (1024, 128, 16));
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn task_above_intrinsic_names_the_key() {
        let text = TASK.replace("[16, 32, 64, 128]", "[16, 256]");
        match parse_config(&text) {
            Err(Error::Config { key, message }) => {
                assert_eq!(key, "dimension_values");
                assert!(message.contains("task_dim 256 exceeds intrinsic_dim 128"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejections() {
        for (text, key) in [
            (TASK.replace("[16, 32, 64, 128]", "[]"), "dimension_values"),
            (TASK.replace("[16, 32, 64, 128]", "[32, 16]"), "dimension_values"),
            (TASK.replace("intrinsic = 128", "intrinsic = 128\ntask = 4"), "fixed_dims.task"),
            (TASK.replace("extrinsic = 1024\n", ""), "fixed_dims.extrinsic"),
            (format!("{TASK}\nbogus = 1\n"), "<toml>"),
            (format!("{TASK}\n[imp]\nprune_fraction_per_iter = 1.5\n"), "imp"),
        ] {
            match parse_config(&text) {
                Err(Error::Config { key: k, .. }) => assert!(k == key || key == "<toml>", "{k} != {key}"),
                other => panic!("expected config error for {key}: {other:?}"),
            }
        }
    }

    #[test]
    fn intrinsic_sweep_defaults_task_to_intrinsic() {
        let text = r#"
sweep_axis = "intrinsic"
dimension_values = [4, 16, 64]
fixed_dims = { extrinsic = 1024 }
architectures = [{ hidden_dims = [256, 128] }]
"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.dims(16), (1024, 16, 16));
        assert_ne!(cfg.dataset_spec(4).seed, cfg.dataset_spec(16).seed);
        let a = &cfg.architectures[0];
        assert_ne!(cfg.trial_seed(4, a, 0), cfg.trial_seed(4, a, 1));
    }
}

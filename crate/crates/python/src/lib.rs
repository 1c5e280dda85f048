//! Python bindings: dataset generation, the MLP engine, IMP trials and the
//! rank-correlation statistics.

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use prunelab_core::datagen::{self, Embedding, TaskDatasetSpec};
use prunelab_core::nn::{self, NetworkArch};
use prunelab_core::pruning::{self, ImpConfig, PruneScope, TrialStatus};
use prunelab_core::stats::{self, GroupStat, McConfig, McMode};
use prunelab_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[pyclass(name = "Dataset", module = "prunelab")]
struct PyDataset {
    inner: datagen::Dataset,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn n_train(&self) -> usize {
        self.inner.train.len()
    }

    #[getter]
    fn n_test(&self) -> usize {
        self.inner.test.len()
    }

    #[getter]
    fn attempt(&self) -> usize {
        self.inner.provenance.attempt
    }

    /// `(inputs, labels)` of the `"train"` or `"test"` split.
    fn split(&self, which: &str) -> PyResult<(Vec<Vec<f64>>, Vec<u8>)> {
        let s = match which {
            "train" => &self.inner.train,
            "test" => &self.inner.test,
            _ => return Err(PyValueError::new_err("split must be 'train' or 'test'")),
        };
        Ok((rows(&s.inputs), s.labels.clone()))
    }

    fn positive_fraction(&self) -> f64 {
        self.inner.train.positive_fraction()
    }

    fn hyperplane(&self) -> Vec<f64> {
        self.inner.provenance.hyperplane.normal.clone()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyDataset { inner: datagen::Dataset::load(path.as_ref()).map_err(py_err)? })
    }
}

/// Generate a synthetic classification dataset.
#[pyfunction]
#[pyo3(signature = (extrinsic_dim, intrinsic_dim, task_dim, n_train=50_000, n_test=10_000, seed=0, embedding="linear"))]
fn generate_dataset(
    extrinsic_dim: usize,
    intrinsic_dim: usize,
    task_dim: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
    embedding: &str,
) -> PyResult<PyDataset> {
    let mut spec = TaskDatasetSpec::linear(extrinsic_dim, intrinsic_dim, task_dim, seed).with_sizes(n_train, n_test);
    spec.embedding = match embedding {
        "linear" => Embedding::Linear,
        "nonlinear_manifold" => Embedding::NonlinearManifold,
        other => return Err(PyValueError::new_err(format!("unknown embedding `{other}`"))),
    };
    Ok(PyDataset { inner: datagen::generate(&spec).map_err(py_err)? })
}

/// Nearest-neighbor resize of an `H × W × C` nested list.
#[pyfunction]
fn nn_resize(image: Vec<Vec<Vec<f64>>>, height: usize, width: usize) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let h = image.len();
    let w = image.first().map_or(0, Vec::len);
    let c = image.first().and_then(|r| r.first()).map_or(0, Vec::len);
    let flat: Vec<f64> = image.into_iter().flatten().flatten().collect();
    let arr = ndarray::Array3::from_shape_vec((h, w, c), flat).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = datagen::nn_resize(arr.view(), (height, width)).map_err(py_err)?;
    Ok(out.outer_iter().map(|r| r.outer_iter().map(|p| p.to_vec()).collect()).collect())
}

#[pyclass(name = "Network", module = "prunelab")]
struct PyNetwork {
    inner: nn::Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (input_dim, hidden_dims, output_dim=2, seed=0))]
    fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize, seed: u64) -> PyResult<Self> {
        let arch = NetworkArch::new(input_dim, hidden_dims, output_dim).map_err(py_err)?;
        Ok(PyNetwork { inner: nn::Network::init(&arch, seed).map_err(py_err)? })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.arch().label()
    }

    #[getter]
    fn weight_count(&self) -> usize {
        self.inner.weight_count()
    }

    #[getter]
    fn unmasked_count(&self) -> usize {
        self.inner.unmasked_count()
    }

    fn forward(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(inputs)?;
        Ok(rows(&self.inner.forward(x.view()).map_err(py_err)?))
    }

    fn predict(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        let x = matrix(inputs)?;
        self.inner.predict(x.view()).map_err(py_err)
    }

    /// Mean loss and the flattened weight gradient of every layer.
    fn loss_and_grad(&self, inputs: Vec<Vec<f64>>, labels: Vec<u8>) -> PyResult<(f64, Vec<Vec<f64>>)> {
        let x = matrix(inputs)?;
        let (loss, g) = self.inner.loss_and_grad(x.view(), &labels).map_err(py_err)?;
        Ok((loss, g.layers.iter().map(|l| l.weights.iter().copied().collect()).collect()))
    }

    /// Prune the smallest surviving weights in place.
    #[pyo3(signature = (fraction, scope="global"))]
    fn prune(&mut self, fraction: f64, scope: &str) -> PyResult<usize> {
        let scope = parse_scope(scope)?;
        let masks = pruning::magnitude_prune(&self.inner, fraction, scope).map_err(py_err)?;
        self.inner.set_masks(masks).map_err(py_err)?;
        Ok(self.inner.unmasked_count())
    }

    /// Train with SGD; returns test accuracy when a test split is given.
    #[pyo3(signature = (dataset, epochs=20, learning_rate=0.1, batch_size=128, seed=0))]
    fn fit(&mut self, dataset: &PyDataset, epochs: usize, learning_rate: f64, batch_size: usize, seed: u64) -> PyResult<f64> {
        let cfg = nn::TrainConfig { learning_rate, batch_size, epochs, rewind_step: 0, seed };
        let out = nn::train(self.inner.clone(), dataset.inner.train.labeled(), &cfg).map_err(py_err)?;
        self.inner = out.network;
        nn::evaluate(&self.inner, dataset.inner.test.labeled()).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyNetwork { inner: nn::Network::load(path.as_ref()).map_err(py_err)? })
    }
}

fn parse_scope(scope: &str) -> PyResult<PruneScope> {
    match scope {
        "global" => Ok(PruneScope::Global),
        "per_layer" => Ok(PruneScope::PerLayer),
        other => Err(PyValueError::new_err(format!("unknown scope `{other}`"))),
    }
}

#[pyclass(name = "TrialResult", module = "prunelab", get_all)]
struct PyTrialResult {
    seed: u64,
    dense_accuracy: f64,
    /// `(weights_remaining_pct, test_accuracy)` per level.
    levels: Vec<(f64, f64)>,
    status: String,
    min_matching_pct: Option<f64>,
}

/// One IMP trial on `dataset` with an `MLP` of the given hidden widths.
#[pyfunction]
#[pyo3(signature = (dataset, hidden_dims, n_iterations=25, prune_fraction=0.2, epochs=20, learning_rate=0.1, batch_size=128, rewind_step=None, seed=0, scope="global"))]
#[allow(clippy::too_many_arguments)]
fn imp_run(
    py: Python<'_>,
    dataset: &PyDataset,
    hidden_dims: Vec<usize>,
    n_iterations: usize,
    prune_fraction: f64,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    rewind_step: Option<usize>,
    seed: u64,
    scope: &str,
) -> PyResult<PyTrialResult> {
    let arch = NetworkArch::new(dataset.inner.input_dim(), hidden_dims, 2).map_err(py_err)?;
    let n = dataset.inner.train.len();
    let cfg = ImpConfig {
        prune_fraction_per_iter: prune_fraction,
        n_iterations,
        scope: parse_scope(scope)?,
        train: nn::TrainConfig {
            learning_rate,
            batch_size,
            epochs,
            rewind_step: rewind_step.unwrap_or_else(|| nn::steps_per_epoch(n, batch_size.max(1))),
            seed,
        },
        prune_biases: false,
    };
    let data = &dataset.inner;
    let t = py.detach(|| pruning::imp_run(&arch, data, &cfg)).map_err(py_err)?;
    Ok(PyTrialResult {
        seed: t.seed,
        dense_accuracy: t.dense_accuracy,
        levels: t.levels.iter().map(|l| (l.weights_remaining_pct, l.test_accuracy)).collect(),
        status: match t.status {
            TrialStatus::Ok => "ok".into(),
            TrialStatus::Diverged => "diverged".into(),
        },
        min_matching_pct: pruning::min_matching_weights(&t),
    })
}

#[pyfunction]
fn rank_with_ties(values: Vec<f64>) -> Vec<f64> {
    stats::rank_with_ties(&values)
}

/// Spearman's rho, or `None` when either list is constant.
#[pyfunction]
fn spearman_rho(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<Option<f64>> {
    stats::spearman_rho(&xs, &ys).map_err(py_err)
}

/// Rows `(group_label, dimension, mean_pct, std_pct)` of a built-in table.
#[pyfunction]
fn fixture(name: &str) -> PyResult<Vec<(String, u64, f64, f64)>> {
    Ok(stats::fixture(name)
        .map_err(py_err)?
        .into_iter()
        .map(|g| (g.group_label, g.dimension_value, g.mean_pct, g.std_pct))
        .collect())
}

#[pyclass(name = "CorrelationReport", module = "prunelab", get_all)]
struct PyCorrelationReport {
    rho_mean: f64,
    rho_std: f64,
    samples: Vec<f64>,
    undefined_rollouts: usize,
}

#[pymethods]
impl PyCorrelationReport {
    /// `(bin_center, count)` over `[-1, 1]`.
    fn histogram(&self, bins: usize) -> PyResult<Vec<(f64, usize)>> {
        let report = stats::CorrelationReport {
            rho_mean: self.rho_mean,
            rho_std: self.rho_std,
            samples: self.samples.clone(),
            undefined_rollouts: self.undefined_rollouts,
            config: McConfig::default(),
        };
        Ok(stats::emit_histogram(&report, bins).map_err(py_err)?.into_iter().map(|b| (b.bin_center, b.count)).collect())
    }
}

/// Monte Carlo Spearman correlation of `(label, dimension, mean, std)` rows.
#[pyfunction]
#[pyo3(signature = (groups, n_outcomes=1000, n_rollouts=5000, seed=0, mode="pooled"))]
fn mc_correlation(
    py: Python<'_>,
    groups: Vec<(String, u64, f64, f64)>,
    n_outcomes: usize,
    n_rollouts: usize,
    seed: u64,
    mode: &str,
) -> PyResult<PyCorrelationReport> {
    let mode = match mode {
        "pooled" => McMode::Pooled,
        "per_group" => McMode::PerGroup,
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    };
    let rows: Vec<GroupStat> = groups
        .into_iter()
        .map(|(group_label, dimension_value, mean_pct, std_pct)| GroupStat { group_label, dimension_value, mean_pct, std_pct })
        .collect();
    let cfg = McConfig { n_outcomes, n_rollouts, seed, mode };
    let r = py.detach(|| stats::mc_correlation(&rows, &cfg)).map_err(py_err)?;
    Ok(PyCorrelationReport { rho_mean: r.rho_mean, rho_std: r.rho_std, samples: r.samples, undefined_rollouts: r.undefined_rollouts })
}

#[pymodule]
fn prunelab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyTrialResult>()?;
    m.add_class::<PyCorrelationReport>()?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(nn_resize, m)?)?;
    m.add_function(wrap_pyfunction!(imp_run, m)?)?;
    m.add_function(wrap_pyfunction!(rank_with_ties, m)?)?;
    m.add_function(wrap_pyfunction!(spearman_rho, m)?)?;
    m.add_function(wrap_pyfunction!(fixture, m)?)?;
    m.add_function(wrap_pyfunction!(mc_correlation, m)?)?;
    Ok(())
}

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use super::arch::NetworkArch;
use super::kernels::{self, ActiveSet};
use crate::container::{ArrayData, Container};
use crate::error::{Error, Result};
use crate::seed;

/// One dense layer: `fan_out × fan_in` weights, bias and pruning mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) weights: Array2<f64>,
    pub(crate) bias: Array1<f64>,
    pub(crate) mask: Array2<bool>,
}

impl Layer {
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }

    /// Weights with masked entries forced to zero.
    pub fn effective_weights(&self) -> Array2<f64> {
        let mut w = self.weights.clone();
        w.zip_mut_with(&self.mask, |w, &m| {
            if !m {
                *w = 0.0;
            }
        });
        w
    }

    pub fn unmasked(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Weight and bias values of one layer, without a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Parameter snapshot at a training step, used as the rewind point.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub layers: Vec<LayerParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients of the mean batch loss; zero at masked weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: NetworkArch,
    layers: Vec<Layer>,
    seed: u64,
}

impl Network {
    /// Fan-in scaled uniform weights `U(-1/√fan_in, 1/√fan_in)`, zero biases,
    /// dense masks. Values are drawn layer by layer in row-major order from a
    /// single ChaCha8 stream seeded with `seed`.
    pub fn init(arch: &NetworkArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seed::rng(seed);
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(fan_out, fan_in)| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..bound));
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    mask: Array2::from_elem((fan_out, fan_in), true),
                }
            })
            .collect();
        Ok(Network { arch: arch.clone(), layers, seed })
    }

    /// Assemble a network from explicit parameters; masks default to dense.
    /// Weights under a zero mask entry are stored as zero.
    pub fn from_params(arch: &NetworkArch, params: Vec<LayerParams>, masks: Option<Vec<Array2<bool>>>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        if params.len() != shapes.len() {
            return Err(Error::ShapeMismatch(format!("expected {} layers, got {}", shapes.len(), params.len())));
        }
        let masks = masks.unwrap_or_else(|| shapes.iter().map(|&s| Array2::from_elem(s, true)).collect());
        if masks.len() != shapes.len() {
            return Err(Error::ShapeMismatch(format!("expected {} masks, got {}", shapes.len(), masks.len())));
        }
        let mut layers = Vec::with_capacity(shapes.len());
        for (l, ((p, mask), shape)) in params.into_iter().zip(masks).zip(&shapes).enumerate() {
            if p.weights.dim() != *shape || mask.dim() != *shape || p.bias.len() != shape.0 {
                return Err(Error::ShapeMismatch(format!("layer {l} does not match {shape:?}")));
            }
            let mut weights = p.weights;
            weights.zip_mut_with(&mask, |w, &m| {
                if !m {
                    *w = 0.0;
                }
            });
            layers.push(Layer { weights, bias: p.bias, mask });
        }
        Ok(Network { arch: arch.clone(), layers, seed: 0 })
    }

    /// Record the seed the parameters descend from.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn arch(&self) -> &NetworkArch {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn unmasked_count(&self) -> usize {
        self.layers.iter().map(Layer::unmasked).sum()
    }

    pub fn mask_sum(&self) -> usize {
        self.unmasked_count()
    }

    pub fn masks(&self) -> Vec<Array2<bool>> {
        self.layers.iter().map(|l| l.mask.clone()).collect()
    }

    /// Replace the masks; weights at newly masked positions are zeroed.
    pub fn set_masks(&mut self, masks: Vec<Array2<bool>>) -> Result<()> {
        if masks.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(format!("expected {} masks, got {}", self.layers.len(), masks.len())));
        }
        for (l, (layer, mask)) in self.layers.iter().zip(&masks).enumerate() {
            if layer.mask.dim() != mask.dim() {
                return Err(Error::ShapeMismatch(format!("mask {l} has shape {:?}", mask.dim())));
            }
        }
        for (layer, mask) in self.layers.iter_mut().zip(masks) {
            layer.weights.zip_mut_with(&mask, |w, &m| {
                if !m {
                    *w = 0.0;
                }
            });
            layer.mask = mask;
        }
        Ok(())
    }

    pub fn checkpoint(&self, step: usize) -> Checkpoint {
        Checkpoint {
            step,
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams { weights: l.weights.clone(), bias: l.bias.clone() })
                .collect(),
        }
    }

    pub(crate) fn active_sets(&self) -> Vec<ActiveSet> {
        self.layers.iter().map(|l| ActiveSet::from_mask(&l.mask)).collect()
    }

    fn check_width(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.arch.input_dim {
            return Err(Error::DimensionMismatch { expected: self.arch.input_dim, got: inputs.ncols() });
        }
        Ok(())
    }

    /// Logits for every input row (`n × output_dim`).
    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(&inputs)?;
        let n = inputs.nrows();
        let mut out = Array2::zeros((n, self.arch.output_dim));
        let mut ws = Workspace::new(self, FORWARD_CHUNK.min(n.max(1)));
        for start in (0..n).step_by(FORWARD_CHUNK) {
            let end = (start + FORWARD_CHUNK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            ws.load(&inputs, &idx);
            ws.forward(self);
            let b = idx.len();
            let logits = ws.logits();
            for s in 0..b {
                for c in 0..self.arch.output_dim {
                    out[[start + s, c]] = logits[c * b + s];
                }
            }
        }
        Ok(out)
    }

    /// Predicted class per row; ties go to the lower class index.
    pub fn predict(&self, inputs: ArrayView2<f64>) -> Result<Vec<usize>> {
        let logits = self.forward(inputs)?;
        Ok(logits.rows().into_iter().map(|r| argmax(r.as_slice().expect("row-major logits"))).collect())
    }

    /// Mean softmax cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grad(&self, inputs: ArrayView2<f64>, labels: &[u8]) -> Result<(f64, Gradients)> {
        self.check_width(&inputs)?;
        let n = inputs.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != n {
            return Err(Error::LengthMismatch { left: n, right: labels.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y as usize >= self.arch.output_dim) {
            return Err(Error::LabelOutOfRange { label: bad as usize, classes: self.arch.output_dim });
        }
        let mut ws = Workspace::new(self, n);
        let idx: Vec<usize> = (0..n).collect();
        ws.load(&inputs, &idx);
        let (loss, _) = ws.step(self, labels);
        if !loss.is_finite() {
            return Err(Error::NonFinite);
        }
        let layers = self
            .layers
            .iter()
            .zip(ws.grad_w.iter().zip(&ws.grad_b))
            .map(|(l, (gw, gb))| LayerGrad {
                weights: Array2::from_shape_vec(l.weights.dim(), gw.clone()).expect("gradient shape"),
                bias: Array1::from_vec(gb.clone()),
            })
            .collect();
        Ok((loss / n as f64, Gradients { layers }))
    }

    pub fn to_container(&self) -> Container {
        let meta = serde_json::json!({ "arch": self.arch, "seed": self.seed });
        let mut c = Container::new("network", meta);
        for (l, layer) in self.layers.iter().enumerate() {
            let (o, i) = layer.weights.dim();
            c.push(&format!("layer{l}.weight"), &[o, i], ArrayData::F64(layer.weights.iter().copied().collect()));
            c.push(&format!("layer{l}.bias"), &[o], ArrayData::F64(layer.bias.to_vec()));
            c.push(&format!("layer{l}.mask"), &[o, i], ArrayData::U8(layer.mask.iter().map(|&m| u8::from(m)).collect()));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("network")?;
        let arch: NetworkArch = serde_json::from_value(c.meta["arch"].clone())?;
        let seed = c.meta["seed"].as_u64().ok_or_else(|| c.format_error("missing seed".into()))?;
        let mut params = Vec::new();
        let mut masks = Vec::new();
        for (l, shape) in arch.layer_shapes().into_iter().enumerate() {
            params.push(read_params(c, &format!("layer{l}"), shape)?);
            let (_, m) = c.u8_array(&format!("layer{l}.mask"))?;
            if m.len() != shape.0 * shape.1 || m.iter().any(|&v| v > 1) {
                return Err(c.format_error(format!("layer{l}.mask must hold {shape:?} zeros and ones")));
            }
            masks.push(Array2::from_shape_vec(shape, m.iter().map(|&v| v == 1).collect()).expect("checked shape"));
        }
        let mut net = Network::from_params(&arch, params, Some(masks))?;
        net.seed = seed;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

impl Checkpoint {
    pub fn to_container(&self) -> Container {
        let mut c = Container::new("checkpoint", serde_json::json!({ "step": self.step, "layers": self.layers.len() }));
        for (l, p) in self.layers.iter().enumerate() {
            let (o, i) = p.weights.dim();
            c.push(&format!("layer{l}.weight"), &[o, i], ArrayData::F64(p.weights.iter().copied().collect()));
            c.push(&format!("layer{l}.bias"), &[o], ArrayData::F64(p.bias.to_vec()));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("checkpoint")?;
        let step = c.meta["step"].as_u64().ok_or_else(|| c.format_error("missing step".into()))? as usize;
        let n = c.meta["layers"].as_u64().ok_or_else(|| c.format_error("missing layer count".into()))? as usize;
        let mut layers = Vec::with_capacity(n);
        for l in 0..n {
            let (shape, _) = c.f64_array(&format!("layer{l}.weight"))?;
            if shape.len() != 2 {
                return Err(c.format_error(format!("layer{l}.weight must be 2-D")));
            }
            layers.push(read_params(c, &format!("layer{l}"), (shape[0], shape[1]))?);
        }
        Ok(Checkpoint { step, layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

fn read_params(c: &Container, prefix: &str, shape: (usize, usize)) -> Result<LayerParams> {
    let (ws, w) = c.f64_array(&format!("{prefix}.weight"))?;
    let (bs, b) = c.f64_array(&format!("{prefix}.bias"))?;
    if ws != [shape.0, shape.1] || bs != [shape.0] {
        return Err(c.format_error(format!("{prefix} has shape {ws:?}/{bs:?}, expected {shape:?}")));
    }
    Ok(LayerParams {
        weights: Array2::from_shape_vec(shape, w.to_vec()).expect("checked shape"),
        bias: Array1::from_vec(b.to_vec()),
    })
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

const FORWARD_CHUNK: usize = 256;

/// Scratch buffers for one batch. `acts[0]` holds the transposed input,
/// `acts[l + 1]` the output of layer `l` (post-activation for hidden layers).
pub(crate) struct Workspace {
    cap: usize,
    b: usize,
    active: Vec<ActiveSet>,
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    pub(crate) grad_w: Vec<Vec<f64>>,
    pub(crate) grad_b: Vec<Vec<f64>>,
}

impl Workspace {
    pub(crate) fn new(net: &Network, cap: usize) -> Self {
        let mut widths = vec![net.arch.input_dim];
        widths.extend(net.layers.iter().map(Layer::fan_out));
        Workspace {
            cap,
            b: 0,
            active: net.active_sets(),
            acts: widths.iter().map(|w| vec![0.0; w * cap]).collect(),
            deltas: widths.iter().map(|w| vec![0.0; w * cap]).collect(),
            grad_w: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            grad_b: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Gather `rows` of `inputs` into the transposed input buffer.
    pub(crate) fn load(&mut self, inputs: &ArrayView2<f64>, rows: &[usize]) {
        let b = rows.len();
        assert!(b <= self.cap && b > 0);
        self.b = b;
        let d = inputs.ncols();
        let x = &mut self.acts[0][..d * b];
        for (s, &r) in rows.iter().enumerate() {
            let row = inputs.row(r);
            for (j, &v) in row.iter().enumerate() {
                x[j * b + s] = v;
            }
        }
    }

    pub(crate) fn forward(&mut self, net: &Network) {
        let b = self.b;
        let last = net.layers.len() - 1;
        for (l, layer) in net.layers.iter().enumerate() {
            let (before, after) = self.acts.split_at_mut(l + 1);
            let a_prev = &before[l][..layer.fan_in() * b];
            let z = &mut after[0][..layer.fan_out() * b];
            kernels::forward_layer(
                layer.weights.as_slice().expect("standard layout"),
                &self.active[l],
                layer.fan_in(),
                layer.bias.as_slice().expect("standard layout"),
                a_prev,
                z,
                b,
            );
            if l < last {
                kernels::relu_in_place(z);
            }
        }
    }

    pub(crate) fn logits(&self) -> &[f64] {
        let out = self.acts.last().expect("at least one layer");
        &out[..out.len() / self.cap * self.b]
    }

    /// Forward + backward on the loaded batch. Returns `(summed loss, correct)`.
    pub(crate) fn step(&mut self, net: &Network, labels: &[u8]) -> (f64, usize) {
        self.forward(net);
        let b = self.b;
        let depth = net.layers.len();
        let classes = net.arch.output_dim;
        let (loss, correct) = {
            let logits = &self.acts[depth][..classes * b];
            let dlogits = &mut self.deltas[depth][..classes * b];
            kernels::softmax_xent(logits, labels, classes, dlogits, b)
        };
        if !loss.is_finite() {
            return (loss, correct);
        }
        for l in (0..depth).rev() {
            let layer = &net.layers[l];
            let (lower, upper) = self.deltas.split_at_mut(l + 1);
            let dz = &upper[0][..layer.fan_out() * b];
            let a_prev = &self.acts[l][..layer.fan_in() * b];
            let da_prev = if l > 0 { Some(&mut lower[l][..layer.fan_in() * b]) } else { None };
            kernels::backward_layer(
                layer.weights.as_slice().expect("standard layout"),
                layer.mask.as_slice().expect("standard layout"),
                &self.active[l],
                layer.fan_in(),
                dz,
                a_prev,
                &mut self.grad_w[l],
                &mut self.grad_b[l],
                da_prev,
                b,
            );
            if l > 0 {
                kernels::relu_backward(&mut lower[l][..layer.fan_in() * b], a_prev);
            }
        }
        (loss, correct)
    }

    /// Plain SGD on active weights and all biases.
    pub(crate) fn apply_sgd(&self, net: &mut Network, lr: f64) {
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let fan_in = layer.fan_in();
            let w = layer.weights.as_slice_mut().expect("standard layout");
            let g = &self.grad_w[l];
            let act = &self.active[l];
            for p in 0..layer.bias.len() {
                for &j in act.row(p) {
                    let i = p * fan_in + j as usize;
                    w[i] -= lr * g[i];
                }
            }
            for (b, gb) in layer.bias.iter_mut().zip(&self.grad_b[l]) {
                *b -= lr * gb;
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

/// Layer widths of a dense classifier: `input_dim → hidden_dims… → output_dim`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkArch {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl NetworkArch {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        let arch = NetworkArch { input_dim, hidden_dims, output_dim, activation: Activation::Relu };
        arch.validate()?;
        Ok(arch)
    }

    /// `MLP-P-Q`: two ReLU hidden layers and a binary output head.
    pub fn mlp(input_dim: usize, p: usize, q: usize) -> Self {
        NetworkArch { input_dim, hidden_dims: vec![p, q], output_dim: 2, activation: Activation::Relu }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::InvalidArch("at least one hidden layer is required".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArch(format!("all widths must be positive: {}", self.label())));
        }
        if self.output_dim > 256 {
            return Err(Error::InvalidArch(format!("at most 256 classes are supported, got {}", self.output_dim)));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` for every layer, input side first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn prunable_weight_count(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i).sum()
    }

    /// `MLP-256-128` style label; the input and output widths are not part of it.
    pub fn label(&self) -> String {
        let hidden: Vec<String> = self.hidden_dims.iter().map(|h| h.to_string()).collect();
        format!("MLP-{}", hidden.join("-"))
    }
}

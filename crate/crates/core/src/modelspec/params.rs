//! Exact trainable-parameter counting.
//!
//! Counting conventions:
//! - `conv2d`: `out_ch * (in_ch * kh * kw + 1)`
//! - `fc` / `output`: `in * out + out`
//! - `batch_norm`: `2 * channels` (affine scale and shift only; running
//!   statistics are buffers, not trainable parameters)
//! - `lstm`, per layer: `4 * (in * h + h^2 + h)` with a single bias vector
//!   per gate; layer `l > 1` has `in = h`
//! - `bigru`, per layer per direction: `3 * (in * h + h^2 + h)`; layer
//!   `l > 1` has `in = 2h`
//! - `attention(c)`: `in * c + c` projection plus a learned context vector
//!   of size `c`
//! - activations, pooling, flatten, dropout: 0

use serde::Serialize;

use super::shapes::layer_output_shape;
use super::{LayerSpec, ModelSpec, Shape};
use crate::error::Result;

#[derive(Clone, Debug, Serialize)]
pub struct LayerCount {
    pub index: usize,
    pub label: String,
    pub output: Shape,
    pub weights: u64,
    pub biases: u64,
    pub bn_affine: u64,
}

impl LayerCount {
    pub fn total(&self) -> u64 {
        self.weights + self.biases + self.bn_affine
    }
}

/// Per-layer and total trainable-parameter tally.
#[derive(Clone, Debug, Serialize)]
pub struct ParamReport {
    pub model: String,
    pub layers: Vec<LayerCount>,
    pub total: u64,
    pub total_millions: f64,
    /// Caveats inherited from the model spec (e.g. documented discrepancies
    /// between the reconstruction and published totals).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ParamReport {
    pub fn weights(&self) -> u64 {
        self.layers.iter().map(|l| l.weights).sum()
    }

    pub fn biases(&self) -> u64 {
        self.layers.iter().map(|l| l.biases).sum()
    }

    pub fn bn_affine(&self) -> u64 {
        self.layers.iter().map(|l| l.bn_affine).sum()
    }

    /// Plain-text table, one row per layer.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("model: {}\n", self.model));
        out.push_str(&format!(
            "{:<5} {:<28} {:<16} {:>12} {:>10} {:>10} {:>12}\n",
            "idx", "layer", "output", "weights", "biases", "bn", "params"
        ));
        for l in &self.layers {
            out.push_str(&format!(
                "{:<5} {:<28} {:<16} {:>12} {:>10} {:>10} {:>12}\n",
                l.index,
                l.label,
                l.output.to_string(),
                l.weights,
                l.biases,
                l.bn_affine,
                l.total()
            ));
        }
        out.push_str(&format!(
            "total: {} ({}M)\n",
            self.total,
            format_millions(self.total_millions)
        ));
        for note in &self.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        out
    }
}

/// Parameter total in millions, rounded half-up to 2 decimals (the rounding
/// convention used when quoting model sizes as "NN.NNM").
pub fn millions(total: u64) -> f64 {
    ((total as f64) / 1e6 * 100.0 + 0.5).floor() / 100.0
}

pub fn format_millions(m: f64) -> String {
    format!("{m:.2}")
}

fn channel_count(shape: Shape) -> u64 {
    match shape {
        Shape::Map { channels, .. } => channels as u64,
        Shape::Vector { dim } => dim as u64,
        Shape::Sequence { dim, .. } => dim as u64,
    }
}

fn count_layer(layer: &LayerSpec, input: Shape) -> (u64, u64, u64) {
    match layer {
        LayerSpec::Conv2d {
            out_channels,
            kernel,
            ..
        } => {
            let in_ch = match input {
                Shape::Map { channels, .. } => channels as u64,
                _ => 0,
            };
            let out = *out_channels as u64;
            (out * in_ch * kernel.0 as u64 * kernel.1 as u64, out, 0)
        }
        LayerSpec::BatchNorm => (0, 0, 2 * channel_count(input)),
        LayerSpec::FullyConnected { out_dim } => {
            let d = input.len() as u64;
            let k = *out_dim as u64;
            (d * k, k, 0)
        }
        LayerSpec::Output { classes, .. } => {
            let d = input.len() as u64;
            let k = *classes as u64;
            (d * k, k, 0)
        }
        LayerSpec::Lstm { units, layers } => {
            let h = *units as u64;
            let mut weights = 0;
            let mut biases = 0;
            let mut in_dim = channel_count(input);
            for _ in 0..*layers {
                weights += 4 * (in_dim * h + h * h);
                biases += 4 * h;
                in_dim = h;
            }
            (weights, biases, 0)
        }
        LayerSpec::BiGru { units, layers } => {
            let h = *units as u64;
            let mut weights = 0;
            let mut biases = 0;
            let mut in_dim = channel_count(input);
            for _ in 0..*layers {
                // two directions per layer
                weights += 2 * 3 * (in_dim * h + h * h);
                biases += 2 * 3 * h;
                in_dim = 2 * h;
            }
            (weights, biases, 0)
        }
        LayerSpec::Attention { context_dim } => {
            let d = channel_count(input);
            let c = *context_dim as u64;
            // projection d*c (+ bias c) and the learned context vector c
            (d * c + c, c, 0)
        }
        LayerSpec::Residual { main, shortcut } => {
            let mut totals = (0, 0, 0);
            for branch in [main, shortcut] {
                let mut shape = input;
                for (i, l) in branch.iter().enumerate() {
                    let (w, b, bn) = count_layer(l, shape);
                    totals.0 += w;
                    totals.1 += b;
                    totals.2 += bn;
                    shape = layer_output_shape(l, shape, i).expect("counted branch shape");
                }
            }
            totals
        }
        LayerSpec::Relu
        | LayerSpec::Dropout { .. }
        | LayerSpec::MaxPool { .. }
        | LayerSpec::GlobalAvgPool
        | LayerSpec::Flatten => (0, 0, 0),
    }
}

/// Count trainable parameters for every layer. Pure arithmetic over the
/// spec: independent of batch size and tensor data.
pub fn count_params(model: &ModelSpec) -> Result<ParamReport> {
    let mut shape = model.input_shape;
    let mut layers = Vec::with_capacity(model.layers.len());
    let mut total = 0u64;
    for (index, layer) in model.layers.iter().enumerate() {
        let output = layer_output_shape(layer, shape, index)?;
        let (weights, biases, bn_affine) = count_layer(layer, shape);
        total += weights + biases + bn_affine;
        layers.push(LayerCount {
            index,
            label: layer.label(),
            output,
            weights,
            biases,
            bn_affine,
        });
        shape = output;
    }
    Ok(ParamReport {
        model: model.name.clone(),
        layers,
        total,
        total_millions: millions(total),
        notes: model.notes.clone(),
    })
}

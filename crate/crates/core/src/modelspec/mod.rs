//! Declarative model descriptions: ordered layer lists with shape inference,
//! exact trainable-parameter counting, the built-in model catalog and the
//! complexity-reduction transforms.
//!
//! A [`ModelSpec`] is the single source of truth: the same spec drives shape
//! checking, parameter tallies and (for MLP/CNN layer kinds) construction of
//! runnable kernels in the `tensor` module.

mod catalog;
mod params;
mod reduce;
mod shapes;

pub use catalog::{catalog, catalog_names, toy_gap_cnn};
pub use params::{count_params, millions, LayerCount, ParamReport};
pub use reduce::{apply_reduction, Strategy};
pub use shapes::{infer_shapes, layer_output_shape, ShapeTrace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output-layer nonlinearity. Sigmoid for multi-label tagging, softmax for
/// single-label scene classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Softmax,
}

/// One layer of a model, with kind-specific parameters.
///
/// Spatial pairs are `(height, width)` where height is the frequency axis
/// and width the time axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        #[serde(default)]
        padding: (usize, usize),
    },
    BatchNorm,
    Relu,
    MaxPool {
        kernel: (usize, usize),
        stride: (usize, usize),
        #[serde(default)]
        padding: (usize, usize),
    },
    GlobalAvgPool,
    Flatten,
    FullyConnected {
        out_dim: usize,
    },
    Dropout {
        p: f64,
    },
    /// Stacked unidirectional LSTM; analysis-only (no training kernel).
    Lstm {
        units: usize,
        layers: usize,
    },
    /// Stacked bidirectional GRU; analysis-only.
    BiGru {
        units: usize,
        layers: usize,
    },
    /// Attention pooling over a sequence: linear projection to the context
    /// dimension plus a learned context vector; analysis-only.
    Attention {
        context_dim: usize,
    },
    Output {
        classes: usize,
        activation: Activation,
    },
    /// Residual block: `main` and `shortcut` branches are summed (shapes must
    /// agree), followed by a ReLU. An empty shortcut is the identity.
    Residual {
        main: Vec<LayerSpec>,
        shortcut: Vec<LayerSpec>,
    },
}

impl LayerSpec {
    /// Short human-readable kind label for traces and error messages.
    pub fn label(&self) -> String {
        match self {
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
            } => format!(
                "conv2d({out_channels}, {}x{}, s{}x{}, p{}x{})",
                kernel.0, kernel.1, stride.0, stride.1, padding.0, padding.1
            ),
            LayerSpec::BatchNorm => "batch_norm".into(),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::MaxPool { kernel, stride, .. } => {
                format!("max_pool({}x{}, s{}x{})", kernel.0, kernel.1, stride.0, stride.1)
            }
            LayerSpec::GlobalAvgPool => "global_avg_pool".into(),
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::FullyConnected { out_dim } => format!("fc({out_dim})"),
            LayerSpec::Dropout { p } => format!("dropout({p})"),
            LayerSpec::Lstm { units, layers } => format!("lstm({units}x{layers})"),
            LayerSpec::BiGru { units, layers } => format!("bigru({units}x{layers})"),
            LayerSpec::Attention { context_dim } => format!("attention({context_dim})"),
            LayerSpec::Output { classes, activation } => {
                format!("output({classes}, {activation:?})")
            }
            LayerSpec::Residual { .. } => "residual".into(),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |msg: String| Error::Shape {
            layer: index,
            kind: self.label(),
            message: msg,
        };
        match self {
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if *out_channels == 0 || kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
                    return Err(bad("conv sizes and strides must be >= 1".into()));
                }
            }
            LayerSpec::MaxPool { kernel, stride, .. } => {
                if kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
                    return Err(bad("pool sizes and strides must be >= 1".into()));
                }
            }
            LayerSpec::FullyConnected { out_dim } if *out_dim == 0 => {
                return Err(bad("fc width must be >= 1".into()));
            }
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(p) {
                    return Err(bad(format!("dropout p={p} outside [0, 1)")));
                }
            }
            LayerSpec::Lstm { units, layers } | LayerSpec::BiGru { units, layers } => {
                if *units == 0 || *layers == 0 {
                    return Err(bad("recurrent units and layer count must be >= 1".into()));
                }
            }
            LayerSpec::Output { classes, .. } if *classes == 0 => {
                return Err(bad("output needs at least one class".into()));
            }
            LayerSpec::Residual { main, shortcut } => {
                for (i, l) in main.iter().chain(shortcut.iter()).enumerate() {
                    l.validate(i)?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Input or intermediate activation shape (batch axis excluded).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// (channels, height=frequency, width=time) feature maps.
    Map {
        channels: usize,
        height: usize,
        width: usize,
    },
    /// Flat feature vector.
    Vector { dim: usize },
    /// (time, dim) sequence for recurrent models.
    Sequence { steps: usize, dim: usize },
}

impl Shape {
    pub fn map(channels: usize, height: usize, width: usize) -> Self {
        Shape::Map {
            channels,
            height,
            width,
        }
    }

    pub fn vector(dim: usize) -> Self {
        Shape::Vector { dim }
    }

    /// Number of scalar elements.
    pub fn len(&self) -> usize {
        match *self {
            Shape::Map {
                channels,
                height,
                width,
            } => channels * height * width,
            Shape::Vector { dim } => dim,
            Shape::Sequence { steps, dim } => steps * dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Shape::Map {
                channels,
                height,
                width,
            } => write!(f, "({channels}, {height}, {width})"),
            Shape::Vector { dim } => write!(f, "({dim})"),
            Shape::Sequence { steps, dim } => write!(f, "[{steps} x {dim}]"),
        }
    }
}

/// A complete architecture description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
    /// Free-form caveats attached by the catalog (e.g. known reconstruction
    /// discrepancies); copied into parameter reports.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, input_shape: Shape, layers: Vec<LayerSpec>) -> Self {
        ModelSpec {
            name: name.into(),
            input_shape,
            layers,
            notes: Vec::new(),
        }
    }

    /// Structural validation: per-layer parameter sanity plus the
    /// exactly-one-output-layer-and-it-is-last rule. Shape compatibility is
    /// checked separately by [`infer_shapes`].
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::data(format!("model '{}' has no layers", self.name)));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i)?;
        }
        let outputs: Vec<usize> = self
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Output { .. }))
            .map(|(i, _)| i)
            .collect();
        match outputs.as_slice() {
            [last] if *last == self.layers.len() - 1 => Ok(()),
            [] => Err(Error::data(format!(
                "model '{}' has no output layer",
                self.name
            ))),
            _ => Err(Error::data(format!(
                "model '{}' must have exactly one output layer, as the last layer",
                self.name
            ))),
        }
    }

    /// Class count and activation of the output layer.
    pub fn output(&self) -> Result<(usize, Activation)> {
        match self.layers.last() {
            Some(LayerSpec::Output { classes, activation }) => Ok((*classes, *activation)),
            _ => Err(Error::data(format!(
                "model '{}' does not end in an output layer",
                self.name
            ))),
        }
    }

    /// Replace the number of output classes, keeping the activation.
    pub fn with_classes(mut self, classes: usize) -> Self {
        if let Some(LayerSpec::Output { classes: c, .. }) = self.layers.last_mut() {
            *c = classes;
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("modelspec serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            serde_json::from_str(text).map_err(|e| Error::data(format!("bad model spec JSON: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelSpec {
        ModelSpec::new(
            "tiny",
            Shape::map(1, 8, 8),
            vec![
                LayerSpec::Conv2d {
                    out_channels: 4,
                    kernel: (3, 3),
                    stride: (1, 1),
                    padding: (1, 1),
                },
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Output {
                    classes: 3,
                    activation: Activation::Sigmoid,
                },
            ],
        )
    }

    #[test]
    fn validates_single_trailing_output() {
        assert!(tiny().validate().is_ok());

        let mut two_outputs = tiny();
        two_outputs.layers.push(LayerSpec::Output {
            classes: 3,
            activation: Activation::Sigmoid,
        });
        assert!(two_outputs.validate().is_err());

        let mut no_output = tiny();
        no_output.layers.pop();
        assert!(no_output.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = tiny();
        let back = ModelSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn rejects_bad_dropout() {
        let mut spec = tiny();
        spec.layers.insert(1, LayerSpec::Dropout { p: 1.0 });
        assert!(spec.validate().is_err());
    }
}

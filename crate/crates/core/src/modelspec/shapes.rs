//! Deterministic shape inference over a layer list.

use serde::Serialize;

use super::{LayerSpec, ModelSpec, Shape};
use crate::error::{Error, Result};

/// Per-layer output shapes, in layer order.
#[derive(Clone, Debug, Serialize)]
pub struct ShapeTrace {
    pub input: Shape,
    pub layers: Vec<TraceEntry>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    pub index: usize,
    pub label: String,
    pub output: Shape,
}

impl ShapeTrace {
    pub fn output_shape(&self) -> Shape {
        self.layers.last().map(|e| e.output).unwrap_or(self.input)
    }
}

fn conv_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output shape of a single layer given its input shape.
///
/// Conv/pool use floor arithmetic: `out = floor((in + 2*pad - k)/stride) + 1`.
pub fn layer_output_shape(layer: &LayerSpec, input: Shape, index: usize) -> Result<Shape> {
    let err = |message: String| Error::Shape {
        layer: index,
        kind: layer.label(),
        message,
    };
    match layer {
        LayerSpec::Conv2d {
            out_channels,
            kernel,
            stride,
            padding,
        } => match input {
            Shape::Map { height, width, .. } => {
                let h = conv_extent(height, kernel.0, stride.0, padding.0);
                let w = conv_extent(width, kernel.1, stride.1, padding.1);
                match (h, w) {
                    (Some(h), Some(w)) if h > 0 && w > 0 => Ok(Shape::map(*out_channels, h, w)),
                    _ => Err(err(format!("kernel does not fit input {input}"))),
                }
            }
            _ => Err(err(format!("conv2d needs a feature map, got {input}"))),
        },
        LayerSpec::MaxPool {
            kernel,
            stride,
            padding,
        } => match input {
            Shape::Map {
                channels,
                height,
                width,
            } => {
                let h = conv_extent(height, kernel.0, stride.0, padding.0);
                let w = conv_extent(width, kernel.1, stride.1, padding.1);
                match (h, w) {
                    (Some(h), Some(w)) if h > 0 && w > 0 => Ok(Shape::map(channels, h, w)),
                    _ => Err(err(format!("pool window does not fit input {input}"))),
                }
            }
            _ => Err(err(format!("max_pool needs a feature map, got {input}"))),
        },
        LayerSpec::GlobalAvgPool => match input {
            Shape::Map {
                channels,
                height,
                width,
            } => {
                if height == 0 || width == 0 {
                    Err(err("empty spatial extent".into()))
                } else {
                    Ok(Shape::vector(channels))
                }
            }
            _ => Err(err(format!("global_avg_pool needs a feature map, got {input}"))),
        },
        LayerSpec::Flatten => match input {
            Shape::Map { .. } | Shape::Sequence { .. } => Ok(Shape::vector(input.len())),
            Shape::Vector { .. } => Ok(input),
        },
        LayerSpec::BatchNorm | LayerSpec::Relu | LayerSpec::Dropout { .. } => Ok(input),
        LayerSpec::FullyConnected { out_dim } => match input {
            Shape::Vector { .. } => Ok(Shape::vector(*out_dim)),
            _ => Err(err(format!("fc needs a flat vector, got {input}"))),
        },
        LayerSpec::Lstm { units, .. } => match input {
            // Final hidden state of the top layer.
            Shape::Sequence { .. } => Ok(Shape::vector(*units)),
            _ => Err(err(format!("lstm needs a sequence input, got {input}"))),
        },
        LayerSpec::BiGru { units, .. } => match input {
            Shape::Sequence { steps, .. } => Ok(Shape::Sequence {
                steps,
                dim: 2 * units,
            }),
            _ => Err(err(format!("bigru needs a sequence input, got {input}"))),
        },
        LayerSpec::Attention { .. } => match input {
            // Attention-weighted sum over time keeps the feature dimension.
            Shape::Sequence { dim, .. } => Ok(Shape::vector(dim)),
            _ => Err(err(format!("attention needs a sequence input, got {input}"))),
        },
        LayerSpec::Output { classes, .. } => match input {
            Shape::Vector { .. } => Ok(Shape::vector(*classes)),
            _ => Err(err(format!("output needs a flat vector, got {input}"))),
        },
        LayerSpec::Residual { main, shortcut } => {
            let run = |branch: &[LayerSpec]| -> Result<Shape> {
                let mut shape = input;
                for (i, l) in branch.iter().enumerate() {
                    shape = layer_output_shape(l, shape, i)?;
                }
                Ok(shape)
            };
            let main_out = run(main)?;
            let short_out = run(shortcut)?;
            if main_out != short_out {
                return Err(err(format!(
                    "branch shapes disagree: main {main_out} vs shortcut {short_out}"
                )));
            }
            Ok(main_out)
        }
    }
}

/// Infer the output shape of every layer, front to back.
pub fn infer_shapes(model: &ModelSpec) -> Result<ShapeTrace> {
    model.validate()?;
    let mut shape = model.input_shape;
    let mut layers = Vec::with_capacity(model.layers.len());
    for (index, layer) in model.layers.iter().enumerate() {
        shape = layer_output_shape(layer, shape, index)?;
        layers.push(TraceEntry {
            index,
            label: layer.label(),
            output: shape,
        });
    }
    Ok(ShapeTrace {
        input: model.input_shape,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::Activation;

    #[test]
    fn conv_floor_arithmetic() {
        // First conv of the AlexNet variant: 11x7 kernel, 2x1 stride, no padding.
        let layer = LayerSpec::Conv2d {
            out_channels: 64,
            kernel: (11, 7),
            stride: (2, 1),
            padding: (0, 0),
        };
        let out = layer_output_shape(&layer, Shape::map(1, 64, 98), 0).unwrap();
        assert_eq!(out, Shape::map(64, 27, 92));
    }

    #[test]
    fn global_avg_pool_collapses_spatial() {
        let out = layer_output_shape(&LayerSpec::GlobalAvgPool, Shape::map(256, 7, 4), 0).unwrap();
        assert_eq!(out, Shape::vector(256));
    }

    #[test]
    fn flatten_multiplies_dims() {
        let out = layer_output_shape(&LayerSpec::Flatten, Shape::map(256, 5, 7), 0).unwrap();
        assert_eq!(out, Shape::vector(8960));
    }

    #[test]
    fn shape_error_names_offending_layer() {
        let model = ModelSpec::new(
            "bad",
            Shape::map(1, 4, 4),
            vec![
                LayerSpec::MaxPool {
                    kernel: (8, 8),
                    stride: (1, 1),
                    padding: (0, 0),
                },
                LayerSpec::Flatten,
                LayerSpec::Output {
                    classes: 2,
                    activation: Activation::Sigmoid,
                },
            ],
        );
        match infer_shapes(&model) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn residual_branches_must_agree() {
        let block = LayerSpec::Residual {
            main: vec![LayerSpec::Conv2d {
                out_channels: 8,
                kernel: (3, 3),
                stride: (1, 1),
                padding: (1, 1),
            }],
            shortcut: vec![],
        };
        // 4-channel input: main branch widens to 8, identity shortcut stays 4.
        assert!(layer_output_shape(&block, Shape::map(4, 6, 6), 0).is_err());
        assert_eq!(
            layer_output_shape(&block, Shape::map(8, 6, 6), 0).unwrap(),
            Shape::map(8, 6, 6)
        );
    }
}

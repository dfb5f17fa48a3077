//! Built-in model catalog.
//!
//! Six architectures sized for 64-mel x 98-frame segment inputs and 527
//! output classes, plus a small GAP-based CNN for desk-scale experiments.
//!
//! The AlexNet variant keeps the usual channel progression
//! (64, 192, 384, 256, 256) but its first convolution uses an 11x7 kernel
//! with 2x1 stride to suit the narrow spectrogram input, and both FC layers
//! have 3982 units. Pool kernels are all 3x3; pool strides are chosen so the
//! last conv feature map is 5x7 (flattened: 8960). The per-layer shape trace
//! printed by `inspect` documents the full progression.

use super::{Activation, LayerSpec, ModelSpec, Shape};
use crate::error::{Error, Result};

pub const CATALOG_NAMES: [&str; 6] = ["mlp", "lstm", "bgru-att", "alexnet", "alexnet-bn", "resnet50"];

/// Valid names accepted by [`catalog`].
pub fn catalog_names() -> &'static [&'static str] {
    &CATALOG_NAMES
}

/// Look up a built-in architecture by name.
pub fn catalog(name: &str) -> Result<ModelSpec> {
    let spec = match name {
        "mlp" => mlp(),
        "lstm" => lstm(),
        "bgru-att" => bgru_att(),
        "alexnet" => alexnet(false),
        "alexnet-bn" => alexnet(true),
        "resnet50" => resnet50(),
        _ => {
            return Err(Error::usage(format!(
                "unknown model '{name}'; valid names: {}",
                CATALOG_NAMES.join(", ")
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

const CLASSES: usize = 527;
const INPUT: Shape = Shape::Map {
    channels: 1,
    height: 64,
    width: 98,
};
const SEQ_INPUT: Shape = Shape::Sequence { steps: 98, dim: 64 };

fn conv(out_channels: usize, kernel: (usize, usize), stride: (usize, usize), padding: (usize, usize)) -> LayerSpec {
    LayerSpec::Conv2d {
        out_channels,
        kernel,
        stride,
        padding,
    }
}

fn pool(kernel: (usize, usize), stride: (usize, usize)) -> LayerSpec {
    LayerSpec::MaxPool {
        kernel,
        stride,
        padding: (0, 0),
    }
}

fn output(classes: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Output { classes, activation }
}

fn mlp() -> ModelSpec {
    let mut layers = vec![LayerSpec::Flatten];
    for _ in 0..3 {
        layers.push(LayerSpec::FullyConnected { out_dim: 1000 });
        layers.push(LayerSpec::BatchNorm);
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Dropout { p: 0.5 });
    }
    layers.push(output(CLASSES, Activation::Sigmoid));
    let mut spec = ModelSpec::new("mlp", INPUT, layers);
    spec.notes.push(
        "published total for this MLP is 9.48M; the reconstruction from a flattened 64x98 \
         input with three 1000-unit hidden layers counts 8.81M. The published input \
         dimensionality is unstated, so the gap is reported rather than forced to match."
            .into(),
    );
    spec
}

fn lstm() -> ModelSpec {
    ModelSpec::new(
        "lstm",
        SEQ_INPUT,
        vec![
            LayerSpec::Lstm {
                units: 2048,
                layers: 3,
            },
            output(CLASSES, Activation::Sigmoid),
        ],
    )
}

fn bgru_att() -> ModelSpec {
    ModelSpec::new(
        "bgru-att",
        SEQ_INPUT,
        vec![
            LayerSpec::BiGru {
                units: 2048,
                layers: 2,
            },
            LayerSpec::Attention { context_dim: 1024 },
            output(CLASSES, Activation::Sigmoid),
        ],
    )
}

fn alexnet(batch_norm: bool) -> ModelSpec {
    let mut layers = Vec::new();
    let push_conv = |layers: &mut Vec<LayerSpec>, c: LayerSpec| {
        layers.push(c);
        if batch_norm {
            layers.push(LayerSpec::BatchNorm);
        }
        layers.push(LayerSpec::Relu);
    };

    push_conv(&mut layers, conv(64, (11, 7), (2, 1), (0, 0)));
    layers.push(pool((3, 3), (1, 2)));
    push_conv(&mut layers, conv(192, (5, 5), (1, 1), (2, 2)));
    layers.push(pool((3, 3), (2, 3)));
    push_conv(&mut layers, conv(384, (3, 3), (1, 1), (1, 1)));
    push_conv(&mut layers, conv(256, (3, 3), (1, 1), (1, 1)));
    push_conv(&mut layers, conv(256, (3, 3), (1, 1), (1, 1)));
    layers.push(pool((3, 3), (2, 2)));
    layers.push(LayerSpec::Flatten);
    for _ in 0..2 {
        layers.push(LayerSpec::FullyConnected { out_dim: 3982 });
        if batch_norm {
            layers.push(LayerSpec::BatchNorm);
        }
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Dropout { p: 0.5 });
    }
    layers.push(output(CLASSES, Activation::Sigmoid));
    ModelSpec::new(if batch_norm { "alexnet-bn" } else { "alexnet" }, INPUT, layers)
}

/// One ResNet bottleneck block: 1x1 -> 3x3 -> 1x1 convolutions with BN,
/// plus a projection shortcut when the shape changes.
fn bottleneck(mid: usize, out: usize, stride: usize, project: bool) -> LayerSpec {
    let main = vec![
        conv(mid, (1, 1), (1, 1), (0, 0)),
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        conv(mid, (3, 3), (stride, stride), (1, 1)),
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        conv(out, (1, 1), (1, 1), (0, 0)),
        LayerSpec::BatchNorm,
    ];
    let shortcut = if project {
        vec![conv(out, (1, 1), (stride, stride), (0, 0)), LayerSpec::BatchNorm]
    } else {
        Vec::new()
    };
    LayerSpec::Residual { main, shortcut }
}

/// 50-layer residual network with the first convolution's stride set to 1,
/// which leaves a 4x7 map for the final global average pooling.
fn resnet50() -> ModelSpec {
    let mut layers = vec![
        conv(64, (7, 7), (1, 1), (3, 3)),
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        LayerSpec::MaxPool {
            kernel: (3, 3),
            stride: (2, 2),
            padding: (1, 1),
        },
    ];
    let stages: [(usize, usize, usize, usize); 4] = [
        (64, 256, 3, 1),
        (128, 512, 4, 2),
        (256, 1024, 6, 2),
        (512, 2048, 3, 2),
    ];
    for (mid, out, blocks, stride) in stages {
        layers.push(bottleneck(mid, out, stride, true));
        for _ in 1..blocks {
            layers.push(bottleneck(mid, out, 1, false));
        }
    }
    layers.push(LayerSpec::GlobalAvgPool);
    layers.push(output(CLASSES, Activation::Sigmoid));
    ModelSpec::new("resnet50", INPUT, layers)
}

/// Small trainable CNN in the global-average-pooling style: two conv blocks,
/// the second spanning the full frequency axis so that channels act as
/// frequency templates, then GAP over time and a direct output layer.
pub fn toy_gap_cnn(classes: usize, activation: Activation) -> ModelSpec {
    let layers = vec![
        conv(16, (11, 7), (2, 3), (0, 0)),
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        conv(32, (27, 3), (1, 1), (0, 0)),
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        output(classes, activation),
    ];
    ModelSpec::new("toy-gap", INPUT, layers)
}

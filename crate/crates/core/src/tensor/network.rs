//! Runnable networks built from a [`ModelSpec`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    BatchNorm, Conv2d, Dropout, Flatten, GlobalAvgPool, Layer, Linear, MaxPool, Mode, Param, Relu, Residual,
};
use super::{LossKind, Tensor};
use crate::error::{Error, Result};
use crate::modelspec::{layer_output_shape, Activation, LayerSpec, ModelSpec, Shape};
use crate::scalar::Scalar;

/// A model instantiated as trainable kernels. Construction is deterministic
/// in the seed: the same spec and seed always produce identical weights.
pub struct Network<F: Scalar> {
    pub spec: ModelSpec,
    pub layers: Vec<Box<dyn Layer<F>>>,
    pub classes: usize,
    pub activation: Activation,
}

fn build_stack<F: Scalar>(
    specs: &[LayerSpec],
    mut shape: Shape,
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Box<dyn Layer<F>>>, Shape)> {
    let mut layers: Vec<Box<dyn Layer<F>>> = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let name = format!("{prefix}{i}");
        let layer: Box<dyn Layer<F>> = match spec {
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let Shape::Map { channels, .. } = shape else {
                    return Err(Error::data(format!("layer {name}: conv2d needs a feature map input")));
                };
                Box::new(Conv2d::new(&name, channels, *out_channels, *kernel, *stride, *padding, rng))
            }
            LayerSpec::BatchNorm => {
                let channels = match shape {
                    Shape::Map { channels, .. } => channels,
                    Shape::Vector { dim } => dim,
                    Shape::Sequence { .. } => {
                        return Err(Error::data(format!("layer {name}: batch_norm over a sequence is unsupported")))
                    }
                };
                Box::new(BatchNorm::new(&name, channels))
            }
            LayerSpec::Relu => Box::new(Relu::new()),
            LayerSpec::MaxPool { kernel, stride, padding } => Box::new(MaxPool::new(*kernel, *stride, *padding)),
            LayerSpec::GlobalAvgPool => Box::new(GlobalAvgPool::new()),
            LayerSpec::Flatten => Box::new(Flatten::new()),
            LayerSpec::FullyConnected { out_dim } => {
                let Shape::Vector { dim } = shape else {
                    return Err(Error::data(format!("layer {name}: fc needs a flat vector input, got {shape}")));
                };
                Box::new(Linear::new(&name, dim, *out_dim, rng))
            }
            LayerSpec::Dropout { p } => Box::new(Dropout::new(*p)),
            LayerSpec::Output { classes, .. } => {
                let Shape::Vector { dim } = shape else {
                    return Err(Error::data(format!(
                        "layer {name}: output needs a flat vector input, got {shape}"
                    )));
                };
                Box::new(Linear::new(&name, dim, *classes, rng))
            }
            LayerSpec::Residual { main, shortcut } => {
                let (main_layers, main_shape) =
                    build_stack(main, shape, &format!("{name}.main."), rng)?;
                let (short_layers, short_shape) =
                    build_stack(shortcut, shape, &format!("{name}.shortcut."), rng)?;
                if main_shape != short_shape {
                    return Err(Error::data(format!(
                        "layer {name}: residual branches end in {main_shape} vs {short_shape}"
                    )));
                }
                Box::new(Residual::new(main_layers, short_layers))
            }
            LayerSpec::Lstm { .. } | LayerSpec::BiGru { .. } | LayerSpec::Attention { .. } => {
                return Err(Error::usage(format!(
                    "layer {name}: {} is analysis-only and has no training kernel",
                    spec.label()
                )));
            }
        };
        shape = layer_output_shape(spec, shape, i)?;
        layers.push(layer);
    }
    Ok((layers, shape))
}

impl<F: Scalar> Network<F> {
    /// Instantiate `spec` with He-normal weights drawn from a ChaCha8 stream
    /// seeded with `seed`.
    pub fn from_spec(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (classes, activation) = spec.output()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (layers, _out) = build_stack(&spec.layers, spec.input_shape, "layer", &mut rng)?;
        Ok(Network {
            spec: spec.clone(),
            layers,
            classes,
            activation,
        })
    }

    /// Loss paired with the output activation.
    pub fn loss_kind(&self) -> LossKind {
        match self.activation {
            Activation::Sigmoid => LossKind::MultiLabelBce,
            Activation::Softmax => LossKind::CategoricalCe,
        }
    }

    /// Batched input shape expected by `forward_logits`.
    pub fn input_tensor_shape(&self, batch: usize) -> Vec<usize> {
        match self.spec.input_shape {
            Shape::Map {
                channels,
                height,
                width,
            } => vec![batch, channels, height, width],
            Shape::Vector { dim } => vec![batch, dim],
            Shape::Sequence { steps, dim } => vec![batch, steps, dim],
        }
    }

    pub fn forward_logits(&mut self, input: &Tensor<F>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor<F>> {
        let expect = self.input_tensor_shape(input.batch());
        if input.shape != expect {
            return Err(Error::data(format!(
                "input shape {:?} does not match model input {:?}",
                input.shape, expect
            )));
        }
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x, mode, rng)?;
        }
        Ok(x)
    }

    /// Backpropagate a logits gradient, accumulating parameter gradients.
    pub fn backward(&mut self, grad_logits: &Tensor<F>) -> Result<Tensor<F>> {
        let mut g = grad_logits.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Eval-mode class scores: logits through the output activation.
    pub fn scores(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        // eval mode never consumes randomness
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = self.forward_logits(input, Mode::Eval, &mut rng)?;
        match self.activation {
            Activation::Sigmoid => Ok(super::ops::sigmoid(&logits)),
            Activation::Softmax => super::ops::softmax_rows(&logits),
        }
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        for layer in &mut self.layers {
            layer.visit_params(f);
        }
    }

    pub fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<F>)) {
        for layer in &mut self.layers {
            layer.visit_state(f);
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    /// Trainable scalar count, for cross-checking against the analytic
    /// parameter report.
    pub fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }

    /// Whether any layer uses dropout (relevant for gradient checking).
    pub fn has_dropout(&self) -> bool {
        fn scan(specs: &[LayerSpec]) -> bool {
            specs.iter().any(|l| match l {
                LayerSpec::Dropout { p } => *p > 0.0,
                LayerSpec::Residual { main, shortcut } => scan(main) || scan(shortcut),
                _ => false,
            })
        }
        scan(&self.spec.layers)
    }
}

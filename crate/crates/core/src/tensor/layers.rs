//! Layer kernels: forward passes with cached state and reverse-mode
//! backward passes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Forward-pass mode. Train uses batch statistics and active dropout; eval
/// is deterministic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable parameter tensor with its gradient slot.
#[derive(Clone, Debug)]
pub struct Param<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    /// Whether weight decay applies. Biases and BN affine parameters are
    /// excluded.
    pub decay: bool,
}

impl<F: Scalar> Param<F> {
    fn new(name: String, value: Tensor<F>, decay: bool) -> Self {
        let grad = Tensor::zeros(&value.shape);
        Param {
            name,
            value,
            grad,
            decay,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }
}

/// Standard-normal sample via Box-Muller, so initialization depends only on
/// the seeded stream and not on platform RNG details.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn he_init<F: Scalar>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<F> {
    let std = (2.0 / fan_in as f64).sqrt();
    let data = (0..shape.iter().product::<usize>())
        .map(|_| F::from_f64_c(normal(rng) * std))
        .collect();
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}

/// One differentiable layer. `backward` must be called after `forward` on
/// the same input and accumulates parameter gradients.
pub trait Layer<F: Scalar> {
    fn forward(&mut self, input: &Tensor<F>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor<F>>;
    fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>>;
    /// Visit trainable parameters in a fixed order.
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        let _ = f;
    }
    /// Visit every persistent tensor (parameters plus non-trainable state
    /// such as BN running statistics) for checkpointing.
    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<F>));
    fn label(&self) -> String;
}

fn shape_err(msg: String) -> Error {
    Error::data(msg)
}

// ---------------------------------------------------------------------------
// Conv2d

pub struct Conv2d<F> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub weight: Param<F>,
    pub bias: Param<F>,
    cached_input: Option<Tensor<F>>,
}

impl<F: Scalar> Conv2d<F> {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel.0 * kernel.1;
        let weight = Param::new(
            format!("{name}.weight"),
            he_init(&[out_channels, in_channels, kernel.0, kernel.1], fan_in, rng),
            true,
        );
        let bias = Param::new(format!("{name}.bias"), Tensor::zeros(&[out_channels]), false);
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight,
            bias,
            cached_input: None,
        }
    }

    fn out_extent(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = (h + 2 * self.padding.0).checked_sub(self.kernel.0).map(|d| d / self.stride.0 + 1);
        let ow = (w + 2 * self.padding.1).checked_sub(self.kernel.1).map(|d| d / self.stride.1 + 1);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(shape_err(format!("conv kernel does not fit {h}x{w} input"))),
        }
    }
}

impl<F: Scalar> Layer<F> for Conv2d<F> {
    fn forward(&mut self, input: &Tensor<F>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Result<Tensor<F>> {
        let [n, c, h, w] = input.shape[..] else {
            return Err(shape_err(format!("conv2d expects NCHW input, got {:?}", input.shape)));
        };
        if c != self.in_channels {
            return Err(shape_err(format!(
                "conv2d expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let (oh, ow) = self.out_extent(h, w)?;
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        let mut out = Tensor::zeros(&[n, self.out_channels, oh, ow]);
        let wdat = &self.weight.value.data;
        for b in 0..n {
            for oc in 0..self.out_channels {
                let w_base = oc * self.in_channels * kh * kw;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = self.bias.value.data[oc];
                        for ic in 0..self.in_channels {
                            for ky in 0..kh {
                                let iy = oy * sh + ky;
                                if iy < ph || iy - ph >= h {
                                    continue;
                                }
                                let in_row = ((b * c + ic) * h + (iy - ph)) * w;
                                let w_row = w_base + (ic * kh + ky) * kw;
                                for kx in 0..kw {
                                    let ix = ox * sw + kx;
                                    if ix < pw || ix - pw >= w {
                                        continue;
                                    }
                                    acc += input.data[in_row + ix - pw] * wdat[w_row + kx];
                                }
                            }
                        }
                        out.data[((b * self.out_channels + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let input = self.cached_input.as_ref().ok_or_else(|| Error::data("conv2d backward before forward"))?;
        let [n, c, h, w] = input.shape[..] else { unreachable!() };
        let [gn, gc, oh, ow] = grad_out.shape[..] else {
            return Err(shape_err("conv2d backward expects NCHW gradient".into()));
        };
        if gn != n || gc != self.out_channels {
            return Err(shape_err("conv2d gradient shape mismatch".into()));
        }
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        let mut grad_in = Tensor::zeros(&input.shape);
        let wdat = &self.weight.value.data;
        let wgrad = &mut self.weight.grad.data;
        for b in 0..n {
            for oc in 0..self.out_channels {
                let w_base = oc * self.in_channels * kh * kw;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = grad_out.data[((b * self.out_channels + oc) * oh + oy) * ow + ox];
                        if g == F::zero() {
                            continue;
                        }
                        self.bias.grad.data[oc] += g;
                        for ic in 0..c {
                            for ky in 0..kh {
                                let iy = oy * sh + ky;
                                if iy < ph || iy - ph >= h {
                                    continue;
                                }
                                let in_row = ((b * c + ic) * h + (iy - ph)) * w;
                                let w_row = w_base + (ic * kh + ky) * kw;
                                for kx in 0..kw {
                                    let ix = ox * sw + kx;
                                    if ix < pw || ix - pw >= w {
                                        continue;
                                    }
                                    wgrad[w_row + kx] += g * input.data[in_row + ix - pw];
                                    grad_in.data[in_row + ix - pw] += g * wdat[w_row + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<F>)) {
        let name = self.weight.name.clone();
        f(&name, &mut self.weight.value);
        let name = self.bias.name.clone();
        f(&name, &mut self.bias.value);
    }

    fn label(&self) -> String {
        format!("conv2d({})", self.out_channels)
    }
}

// ---------------------------------------------------------------------------
// Linear (fully connected / output)

pub struct Linear<F> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// (in_dim, out_dim), y = x W + b
    pub weight: Param<F>,
    pub bias: Param<F>,
    cached_input: Option<Tensor<F>>,
}

impl<F: Scalar> Linear<F> {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = Param::new(format!("{name}.weight"), he_init(&[in_dim, out_dim], in_dim, rng), true);
        let bias = Param::new(format!("{name}.bias"), Tensor::zeros(&[out_dim]), false);
        Linear {
            in_dim,
            out_dim,
            weight,
            bias,
            cached_input: None,
        }
    }
}

impl<F: Scalar> Layer<F> for Linear<F> {
    fn forward(&mut self, input: &Tensor<F>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Result<Tensor<F>> {
        let [n, d] = input.shape[..] else {
            return Err(shape_err(format!("linear expects (N, D) input, got {:?}", input.shape)));
        };
        if d != self.in_dim {
            return Err(shape_err(format!("linear expects {} features, got {d}", self.in_dim)));
        }
        let mut out = Tensor::zeros(&[n, self.out_dim]);
        for b in 0..n {
            let x = &input.data[b * d..(b + 1) * d];
            let y = &mut out.data[b * self.out_dim..(b + 1) * self.out_dim];
            y.copy_from_slice(&self.bias.value.data);
            for (i, &xi) in x.iter().enumerate() {
                if xi == F::zero() {
                    continue;
                }
                let row = &self.weight.value.data[i * self.out_dim..(i + 1) * self.out_dim];
                for (yj, &wij) in y.iter_mut().zip(row) {
                    *yj += xi * wij;
                }
            }
        }
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let input = self.cached_input.as_ref().ok_or_else(|| Error::data("linear backward before forward"))?;
        let [n, d] = input.shape[..] else { unreachable!() };
        if grad_out.shape != [n, self.out_dim] {
            return Err(shape_err("linear gradient shape mismatch".into()));
        }
        let mut grad_in = Tensor::zeros(&input.shape);
        for b in 0..n {
            let x = &input.data[b * d..(b + 1) * d];
            let g = &grad_out.data[b * self.out_dim..(b + 1) * self.out_dim];
            for (gb, &gj) in self.bias.grad.data.iter_mut().zip(g) {
                *gb += gj;
            }
            for (i, &xi) in x.iter().enumerate() {
                let wrow = &self.weight.value.data[i * self.out_dim..(i + 1) * self.out_dim];
                let wgrow = &mut self.weight.grad.data[i * self.out_dim..(i + 1) * self.out_dim];
                let mut acc = F::zero();
                for ((wg, &wij), &gj) in wgrow.iter_mut().zip(wrow).zip(g) {
                    *wg += xi * gj;
                    acc += wij * gj;
                }
                grad_in.data[b * d + i] = acc;
            }
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<F>)) {
        let name = self.weight.name.clone();
        f(&name, &mut self.weight.value);
        let name = self.bias.name.clone();
        f(&name, &mut self.bias.value);
    }

    fn label(&self) -> String {
        format!("linear({})", self.out_dim)
    }
}

// ---------------------------------------------------------------------------
// Batch normalization

/// Variance floor inside the inverse square root.
pub const BN_EPS: f64 = 1e-5;
/// Running-statistics momentum: `running = momentum * running + (1 - momentum) * batch`.
pub const BN_MOMENTUM: f64 = 0.9;

pub struct BatchNorm<F> {
    pub channels: usize,
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
    name: String,
    // caches for backward
    cached_input: Option<Tensor<F>>,
    batch_mean: Vec<F>,
    inv_std: Vec<F>,
    cached_mode: Mode,
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(name: &str, channels: usize) -> Self {
        let mut gamma = Param::new(format!("{name}.gamma"), Tensor::zeros(&[channels]), false);
        gamma.value.fill(F::one());
        let beta = Param::new(format!("{name}.beta"), Tensor::zeros(&[channels]), false);
        let mut running_var = Tensor::zeros(&[channels]);
        running_var.fill(F::one());
        BatchNorm {
            channels,
            gamma,
            beta,
            running_mean: Tensor::zeros(&[channels]),
            running_var,
            name: name.to_string(),
            cached_input: None,
            batch_mean: Vec::new(),
            inv_std: Vec::new(),
            cached_mode: Mode::Eval,
        }
    }

    /// Spatial element count per channel per batch item.
    fn layout(&self, shape: &[usize]) -> Result<(usize, usize)> {
        match shape {
            [n, c] if *c == self.channels => Ok((*n, 1)),
            [n, c, h, w] if *c == self.channels => Ok((*n, h * w)),
            _ => Err(shape_err(format!(
                "batch_norm over {} channels got input shape {shape:?}",
                self.channels
            ))),
        }
    }
}

impl<F: Scalar> Layer<F> for BatchNorm<F> {
    fn forward(&mut self, input: &Tensor<F>, mode: Mode, _rng: &mut ChaCha8Rng) -> Result<Tensor<F>> {
        let (n, spatial) = self.layout(&input.shape)?;
        let c = self.channels;
        let m = F::from_f64_c((n * spatial) as f64);
        let eps = F::from_f64_c(BN_EPS);

        let (mean, var): (Vec<F>, Vec<F>) = if mode == Mode::Train {
            let mut mean = vec![F::zero(); c];
            let mut var = vec![F::zero(); c];
            for b in 0..n {
                for ch in 0..c {
                    let base = (b * c + ch) * spatial;
                    for s in 0..spatial {
                        mean[ch] += input.data[base + s];
                    }
                }
            }
            for v in &mut mean {
                *v /= m;
            }
            for b in 0..n {
                for ch in 0..c {
                    let base = (b * c + ch) * spatial;
                    for s in 0..spatial {
                        let d = input.data[base + s] - mean[ch];
                        var[ch] += d * d;
                    }
                }
            }
            for v in &mut var {
                *v /= m;
            }
            // update running statistics
            let mom = F::from_f64_c(BN_MOMENTUM);
            let one_m = F::one() - mom;
            for ch in 0..c {
                self.running_mean.data[ch] = mom * self.running_mean.data[ch] + one_m * mean[ch];
                self.running_var.data[ch] = mom * self.running_var.data[ch] + one_m * var[ch];
            }
            (mean, var)
        } else {
            (self.running_mean.data.clone(), self.running_var.data.clone())
        };

        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let mut out = Tensor::zeros(&input.shape);
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * spatial;
                let g = self.gamma.value.data[ch];
                let bt = self.beta.value.data[ch];
                for s in 0..spatial {
                    let xhat = (input.data[base + s] - mean[ch]) * inv_std[ch];
                    out.data[base + s] = g * xhat + bt;
                }
            }
        }
        self.cached_input = Some(input.clone());
        self.batch_mean = mean;
        self.inv_std = inv_std;
        self.cached_mode = mode;
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let input = self.cached_input.as_ref().ok_or_else(|| Error::data("batch_norm backward before forward"))?;
        if grad_out.shape != input.shape {
            return Err(shape_err("batch_norm gradient shape mismatch".into()));
        }
        let (n, spatial) = self.layout(&input.shape)?;
        let c = self.channels;
        let m = F::from_f64_c((n * spatial) as f64);
        let mut grad_in = Tensor::zeros(&input.shape);

        for ch in 0..c {
            let mean = self.batch_mean[ch];
            let inv_std = self.inv_std[ch];
            let gamma = self.gamma.value.data[ch];

            // channel-wise reductions
            let mut sum_g = F::zero();
            let mut sum_g_xhat = F::zero();
            for b in 0..n {
                let base = (b * c + ch) * spatial;
                for s in 0..spatial {
                    let g = grad_out.data[base + s];
                    let xhat = (input.data[base + s] - mean) * inv_std;
                    sum_g += g;
                    sum_g_xhat += g * xhat;
                }
            }
            self.beta.grad.data[ch] += sum_g;
            self.gamma.grad.data[ch] += sum_g_xhat;

            if self.cached_mode == Mode::Train {
                // dx = gamma*inv_std/m * (m*g - sum_g - xhat*sum_g_xhat)
                let scale = gamma * inv_std / m;
                for b in 0..n {
                    let base = (b * c + ch) * spatial;
                    for s in 0..spatial {
                        let g = grad_out.data[base + s];
                        let xhat = (input.data[base + s] - mean) * inv_std;
                        grad_in.data[base + s] = scale * (m * g - sum_g - xhat * sum_g_xhat);
                    }
                }
            } else {
                // frozen statistics: plain affine transform
                let scale = gamma * inv_std;
                for b in 0..n {
                    let base = (b * c + ch) * spatial;
                    for s in 0..spatial {
                        grad_in.data[base + s] = grad_out.data[base + s] * scale;
                    }
                }
            }
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<F>)) {
        let name = self.gamma.name.clone();
        f(&name, &mut self.gamma.value);
        let name = self.beta.name.clone();
        f(&name, &mut self.beta.value);
        f(&format!("{}.running_mean", self.name), &mut self.running_mean);
        f(&format!("{}.running_var", self.name), &mut self.running_var);
    }

    fn label(&self) -> String {
        format!("batch_norm({})", self.channels)
    }
}

// ---------------------------------------------------------------------------
// ReLU

#[derive(Default)]
pub struct Relu {
    mask: Vec<bool>,
    shape: Vec<usize>,
}

impl Relu {
    pub fn new() -> Self {
        Relu::default()
    }
}

impl<F: Scalar> Layer<F> for Relu {
    fn forward(&mut self, input: &Tensor<F>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Result<Tensor<F>> {
        self.mask = input.data.iter().map(|&x| x > F::zero()).collect();
        self.shape = input.shape.clone();
        Ok(input.map(|x| if x > F::zero() { x } else { F::zero() }))
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        if grad_out.shape != self.shape {
            return Err(shape_err("relu gradient shape mismatch".into()));
        }
        let data = grad_out
            .data
            .iter()
            .zip(&self.mask)
            .map(|(&g, &keep)| if keep { g } else { F::zero() })
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    fn visit_state(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor<F>)) {}

    fn label(&self) -> String {
        "relu".into()
    }
}

// ---------------------------------------------------------------------------
// Max pooling

pub struct MaxPool {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    input_shape: Vec<usize>,
    /// Input linear index of each output's argmax (first occurrence in
    /// row-major order on ties).
    argmax: Vec<usize>,
}

impl MaxPool {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), padding: (usize, usize)) -> Self {
        MaxPool {
            kernel,
            stride,
            padding,
            input_shape: Vec::new(),
            argmax: Vec::new(),
        }
    }
}

impl<F: Scalar> Layer<F> for MaxPool {
    fn forward(&mut self, input: &Tensor<F>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Result<Tensor<F>> {
        let [n, c, h, w] = input.shape[..] else {
            return Err(shape_err(format!("max_pool expects NCHW input, got {:?}", input.shape)));
        };
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(shape_err(format!("pool window {kh}x{kw} does not fit {h}x{w} input")));
        }
        let oh = (h + 2 * ph - kh) / sh + 1;
        let ow = (w + 2 * pw - kw) / sw + 1;
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        self.argmax = vec![usize::MAX; out.len()];
        for b in 0..n {
            for ch in 0..c {
                let in_base = (b * c + ch) * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = F::neg_infinity();
                        let mut best_idx = usize::MAX;
                        for ky in 0..kh {
                            let iy = oy * sh + ky;
                            if iy < ph || iy - ph >= h {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = ox * sw + kx;
                                if ix < pw || ix - pw >= w {
                                    continue;
                                }
                                let idx = in_base + (iy - ph) * w + (ix - pw);
                                if input.data[idx] > best {
                                    best = input.data[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        let o = ((b * c + ch) * oh + oy) * ow + ox;
                        out.data[o] = best;
                        self.argmax[o] = best_idx;
                    }
                }
            }
        }
        self.input_shape = input.shape.clone();
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        if grad_out.len() != self.argmax.len() {
            return Err(shape_err("max_pool gradient shape mismatch".into()));
        }
        let mut grad_in = Tensor::zeros(&self.input_shape);
        for (o, &idx) in self.argmax.iter().enumerate() {
            if idx != usize::MAX {
                grad_in.data[idx] += grad_out.data[o];
            }
        }
        Ok(grad_in)
    }

    fn visit_state(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor<F>)) {}

    fn label(&self) -> String {
        "max_pool".into()
    }
}

// ---------------------------------------------------------------------------
// Global average pooling

#[derive(Default)]
pub struct GlobalAvgPool {
    input_shape: Vec<usize>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool::default()
    }
}

impl<F: Scalar> Layer<F> for GlobalAvgPool {
    fn forward(&mut self, input: &Tensor<F>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Result<Tensor<F>> {
        let [n, c, h, w] = input.shape[..] else {
            return Err(shape_err(format!("global_avg_pool expects NCHW input, got {:?}", input.shape)));
        };
        if h * w == 0 {
            return Err(shape_err("global_avg_pool over empty spatial extent".into()));
        }
        let inv = F::from_f64_c(1.0 / (h * w) as f64);
        let mut out = Tensor::zeros(&[n, c]);
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * h * w;
                let mut acc = F::zero();
                for s in 0..h * w {
                    acc += input.data[base + s];
                }
                out.data[b * c + ch] = acc * inv;
            }
        }
        self.input_shape = input.shape.clone();
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let [n, c, h, w] = self.input_shape[..] else {
            return Err(Error::data("global_avg_pool backward before forward"));
        };
        if grad_out.shape != [n, c] {
            return Err(shape_err("global_avg_pool gradient shape mismatch".into()));
        }
        let inv = F::from_f64_c(1.0 / (h * w) as f64);
        let mut grad_in = Tensor::zeros(&self.input_shape);
        for b in 0..n {
            for ch in 0..c {
                let g = grad_out.data[b * c + ch] * inv;
                let base = (b * c + ch) * h * w;
                for s in 0..h * w {
                    grad_in.data[base + s] = g;
                }
            }
        }
        Ok(grad_in)
    }

    fn visit_state(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor<F>)) {}

    fn label(&self) -> String {
        "global_avg_pool".into()
    }
}

// ---------------------------------------------------------------------------
// Flatten

#[derive(Default)]
pub struct Flatten {
    input_shape: Vec<usize>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten::default()
    }
}

impl<F: Scalar> Layer<F> for Flatten {
    fn forward(&mut self, input: &Tensor<F>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Result<Tensor<F>> {
        let n = input.batch();
        let rest = input.len() / n.max(1);
        self.input_shape = input.shape.clone();
        Ok(Tensor {
            shape: vec![n, rest],
            data: input.data.clone(),
        })
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(Tensor {
            shape: self.input_shape.clone(),
            data: grad_out.data.clone(),
        })
    }

    fn visit_state(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor<F>)) {}

    fn label(&self) -> String {
        "flatten".into()
    }
}

// ---------------------------------------------------------------------------
// Dropout

pub struct Dropout<F> {
    pub p: f64,
    mask: Vec<F>,
    shape: Vec<usize>,
}

impl<F: Scalar> Dropout<F> {
    pub fn new(p: f64) -> Self {
        Dropout {
            p,
            mask: Vec::new(),
            shape: Vec::new(),
        }
    }
}

impl<F: Scalar> Layer<F> for Dropout<F> {
    fn forward(&mut self, input: &Tensor<F>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor<F>> {
        self.shape = input.shape.clone();
        if mode == Mode::Eval || self.p == 0.0 {
            self.mask.clear();
            return Ok(input.clone());
        }
        // inverted dropout: survivors scaled by 1/(1-p), eval is identity
        let keep_scale = F::from_f64_c(1.0 / (1.0 - self.p));
        self.mask = input
            .data
            .iter()
            .map(|_| {
                if rng.gen::<f64>() < self.p {
                    F::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let data = input.data.iter().zip(&self.mask).map(|(&x, &m)| x * m).collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        if self.mask.is_empty() {
            return Ok(grad_out.clone());
        }
        let data = grad_out.data.iter().zip(&self.mask).map(|(&g, &m)| g * m).collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    fn visit_state(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor<F>)) {}

    fn label(&self) -> String {
        format!("dropout({})", self.p)
    }
}

// ---------------------------------------------------------------------------
// Residual block

pub struct Residual<F: Scalar> {
    pub main: Vec<Box<dyn Layer<F>>>,
    pub shortcut: Vec<Box<dyn Layer<F>>>,
    relu_mask: Vec<bool>,
    shape: Vec<usize>,
}

impl<F: Scalar> Residual<F> {
    pub fn new(main: Vec<Box<dyn Layer<F>>>, shortcut: Vec<Box<dyn Layer<F>>>) -> Self {
        Residual {
            main,
            shortcut,
            relu_mask: Vec::new(),
            shape: Vec::new(),
        }
    }
}

impl<F: Scalar> Layer<F> for Residual<F> {
    fn forward(&mut self, input: &Tensor<F>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor<F>> {
        let mut main_out = input.clone();
        for layer in &mut self.main {
            main_out = layer.forward(&main_out, mode, rng)?;
        }
        let mut short_out = input.clone();
        for layer in &mut self.shortcut {
            short_out = layer.forward(&short_out, mode, rng)?;
        }
        if main_out.shape != short_out.shape {
            return Err(shape_err(format!(
                "residual branch shapes disagree: {:?} vs {:?}",
                main_out.shape, short_out.shape
            )));
        }
        // sum then relu
        let mut out = main_out;
        for (o, &s) in out.data.iter_mut().zip(&short_out.data) {
            *o += s;
        }
        self.relu_mask = out.data.iter().map(|&x| x > F::zero()).collect();
        for x in &mut out.data {
            if *x < F::zero() {
                *x = F::zero();
            }
        }
        self.shape = out.shape.clone();
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        if grad_out.shape != self.shape {
            return Err(shape_err("residual gradient shape mismatch".into()));
        }
        let gated: Vec<F> = grad_out
            .data
            .iter()
            .zip(&self.relu_mask)
            .map(|(&g, &keep)| if keep { g } else { F::zero() })
            .collect();
        let gated = Tensor {
            shape: self.shape.clone(),
            data: gated,
        };
        let mut main_grad = gated.clone();
        for layer in self.main.iter_mut().rev() {
            main_grad = layer.backward(&main_grad)?;
        }
        let mut short_grad = gated;
        for layer in self.shortcut.iter_mut().rev() {
            short_grad = layer.backward(&short_grad)?;
        }
        let mut grad_in = main_grad;
        for (g, &s) in grad_in.data.iter_mut().zip(&short_grad.data) {
            *g += s;
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        for layer in &mut self.main {
            layer.visit_params(f);
        }
        for layer in &mut self.shortcut {
            layer.visit_params(f);
        }
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<F>)) {
        for layer in &mut self.main {
            layer.visit_state(f);
        }
        for layer in &mut self.shortcut {
            layer.visit_state(f);
        }
    }

    fn label(&self) -> String {
        "residual".into()
    }
}

//! Central-difference gradient verification for `f64` networks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::Mode;
use super::{Network, Tensor};
use crate::error::{Error, Result};

const STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Number of parameter elements compared.
    pub checked: usize,
    /// Worst relative error, `|analytic - numeric| / max(|analytic| + |numeric|, 1e-6)`.
    pub max_rel_err: f64,
    /// Parameter name holding the worst element.
    pub worst_param: String,
}

fn loss_at(net: &mut Network<f64>, input: &Tensor<f64>, targets: &Tensor<f64>) -> Result<f64> {
    // no dropout => forward consumes no randomness, so any seed works
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let logits = net.forward_logits(input, Mode::Train, &mut rng)?;
    let (loss, _) = net.loss_kind().compute(&logits, targets)?;
    Ok(loss)
}

/// Compare backprop gradients against central differences on up to
/// `max_per_param` elements of every parameter tensor (strided sampling).
///
/// Requires an `f64` network without active dropout; stochastic masks make
/// the two loss evaluations incomparable.
pub fn gradient_check(
    net: &mut Network<f64>,
    input: &Tensor<f64>,
    targets: &Tensor<f64>,
    max_per_param: usize,
) -> Result<GradCheckReport> {
    if net.has_dropout() {
        return Err(Error::usage(
            "gradient check requires a dropout-free model (stochastic forward passes are not comparable)",
        ));
    }
    if max_per_param == 0 {
        return Err(Error::usage("gradient check needs max_per_param >= 1"));
    }

    // analytic gradients
    net.zero_grads();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let logits = net.forward_logits(input, Mode::Train, &mut rng)?;
    let (_, grad_logits) = net.loss_kind().compute(&logits, targets)?;
    net.backward(&grad_logits)?;

    // element selection: (param ordinal, element index, analytic gradient)
    let mut picks: Vec<(usize, usize, String, f64)> = Vec::new();
    {
        let mut ordinal = 0;
        net.visit_params(&mut |p| {
            let len = p.value.len();
            let stride = (len / max_per_param).max(1);
            let mut i = 0;
            let mut taken = 0;
            while i < len && taken < max_per_param {
                picks.push((ordinal, i, p.name.clone(), p.grad.data[i]));
                taken += 1;
                i += stride;
            }
            ordinal += 1;
        });
    }

    let mut max_rel_err = 0.0f64;
    let mut worst_param = String::new();
    for &(ordinal, idx, ref name, analytic) in &picks {
        let set = |net: &mut Network<f64>, delta: f64| {
            let mut o = 0;
            net.visit_params(&mut |p| {
                if o == ordinal {
                    p.value.data[idx] += delta;
                }
                o += 1;
            });
        };
        set(net, STEP);
        let up = loss_at(net, input, targets)?;
        set(net, -2.0 * STEP);
        let down = loss_at(net, input, targets)?;
        set(net, STEP); // restore
        let numeric = (up - down) / (2.0 * STEP);
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_param = name.clone();
        }
    }

    Ok(GradCheckReport {
        checked: picks.len(),
        max_rel_err,
        worst_param,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::{toy_gap_cnn, Activation, LayerSpec, ModelSpec, Shape};

    #[test]
    fn linear_stack_gradients_agree() {
        let spec = ModelSpec::new(
            "gc-mlp",
            Shape::vector(6),
            vec![
                LayerSpec::FullyConnected { out_dim: 5 },
                LayerSpec::BatchNorm,
                LayerSpec::Relu,
                LayerSpec::Output {
                    classes: 3,
                    activation: Activation::Sigmoid,
                },
            ],
        );
        let mut net = Network::<f64>::from_spec(&spec, 11).unwrap();
        let input = Tensor::from_vec(&[4, 6], (0..24).map(|i| ((i * 37 % 13) as f64 - 6.0) / 4.0).collect()).unwrap();
        let targets = Tensor::from_vec(&[4, 3], (0..12).map(|i| ((i * 5 % 3 == 0) as u8) as f64).collect()).unwrap();
        let report = gradient_check(&mut net, &input, &targets, 20).unwrap();
        assert!(report.max_rel_err < 1e-5, "rel err {} at {}", report.max_rel_err, report.worst_param);
    }

    #[test]
    fn conv_net_gradients_agree() {
        let spec = toy_gap_cnn(3, Activation::Softmax);
        let mut net = Network::<f64>::from_spec(&spec, 5).unwrap();
        let n_in: usize = 64 * 98;
        let input = Tensor::from_vec(
            &[2, 1, 64, 98],
            (0..2 * n_in).map(|i| ((i * 97 % 41) as f64 - 20.0) / 10.0).collect(),
        )
        .unwrap();
        let targets = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let report = gradient_check(&mut net, &input, &targets, 4).unwrap();
        assert!(report.max_rel_err < 1e-4, "rel err {} at {}", report.max_rel_err, report.worst_param);
    }

    #[test]
    fn rejects_dropout_models() {
        let spec = ModelSpec::new(
            "gc-drop",
            Shape::vector(4),
            vec![
                LayerSpec::FullyConnected { out_dim: 4 },
                LayerSpec::Dropout { p: 0.5 },
                LayerSpec::Output {
                    classes: 2,
                    activation: Activation::Sigmoid,
                },
            ],
        );
        let mut net = Network::<f64>::from_spec(&spec, 0).unwrap();
        let input = Tensor::zeros(&[1, 4]);
        let targets = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            gradient_check(&mut net, &input, &targets, 4),
            Err(Error::Usage(_))
        ));
    }
}

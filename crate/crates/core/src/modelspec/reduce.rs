//! Complexity-reduction transforms over the AlexNet-style FC block
//! (`flatten -> fc -> fc -> output`, with optional BN/ReLU/dropout in
//! between).

use super::{LayerSpec, ModelSpec};
use crate::error::{Error, Result};

/// A model-size reduction strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Insert a bottleneck FC of width `k` between the last FC layer and the
    /// output layer.
    BneckFinal(usize),
    /// Insert a bottleneck FC of width `k` between the two FC layers.
    BneckMid(usize),
    /// Shrink both FC layers to width `k`.
    FcResize(usize),
    /// Replace flatten and both FC layers with global average pooling
    /// feeding the output layer directly.
    GlobalAvgPool,
}

impl Strategy {
    /// Parse CLI-style names: `bneck-final-64`, `bneck-mid-256`, `fc-1024`,
    /// `global-avg-pool`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.to_ascii_lowercase();
        let width = |prefix: &str| -> Result<usize> {
            t[prefix.len()..]
                .parse::<usize>()
                .map_err(|_| Error::usage(format!("bad width in reduction '{text}'")))
        };
        if t == "global-avg-pool" {
            Ok(Strategy::GlobalAvgPool)
        } else if t.starts_with("bneck-final-") {
            Ok(Strategy::BneckFinal(width("bneck-final-")?))
        } else if t.starts_with("bneck-mid-") {
            Ok(Strategy::BneckMid(width("bneck-mid-")?))
        } else if t.starts_with("fc-") {
            Ok(Strategy::FcResize(width("fc-")?))
        } else {
            Err(Error::usage(format!(
                "unknown reduction '{text}'; expected bneck-final-K, bneck-mid-K, fc-K or global-avg-pool"
            )))
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::BneckFinal(k) => write!(f, "bneck-final-{k}"),
            Strategy::BneckMid(k) => write!(f, "bneck-mid-{k}"),
            Strategy::FcResize(k) => write!(f, "fc-{k}"),
            Strategy::GlobalAvgPool => write!(f, "global-avg-pool"),
        }
    }
}

struct FcBlock {
    flatten: usize,
    fc1: usize,
    fc2: usize,
    output: usize,
    /// Whether the base model batch-normalizes its FC layers.
    fc_batch_norm: bool,
}

fn locate_fc_block(spec: &ModelSpec) -> Result<FcBlock> {
    let flatten = spec
        .layers
        .iter()
        .position(|l| matches!(l, LayerSpec::Flatten))
        .ok_or_else(|| Error::data(format!("model '{}' has no flatten layer", spec.name)))?;
    let fcs: Vec<usize> = spec
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, LayerSpec::FullyConnected { .. }))
        .map(|(i, _)| i)
        .collect();
    let [fc1, fc2] = fcs.as_slice() else {
        return Err(Error::data(format!(
            "model '{}' must have exactly two FC layers to be reduced (found {})",
            spec.name,
            fcs.len()
        )));
    };
    let output = spec.layers.len() - 1;
    let fc_batch_norm = matches!(spec.layers.get(fc1 + 1), Some(LayerSpec::BatchNorm));
    Ok(FcBlock {
        flatten,
        fc1: *fc1,
        fc2: *fc2,
        output,
        fc_batch_norm,
    })
}

/// Bottleneck insert: FC(k), BN when the base normalizes its FC layers, ReLU.
fn bneck_layers(k: usize, batch_norm: bool) -> Vec<LayerSpec> {
    let mut layers = vec![LayerSpec::FullyConnected { out_dim: k }];
    if batch_norm {
        layers.push(LayerSpec::BatchNorm);
    }
    layers.push(LayerSpec::Relu);
    layers
}

/// Apply a reduction strategy to an AlexNet-style model, returning the
/// transformed spec with a derived name like `alexnet-bn+fc-256`.
pub fn apply_reduction(base: &ModelSpec, strategy: Strategy) -> Result<ModelSpec> {
    base.validate()?;
    let block = locate_fc_block(base)?;
    let mut layers = base.layers.clone();
    let suffix;
    match strategy {
        Strategy::BneckFinal(k) => {
            suffix = format!("bneck-final-{k}");
            let insert = bneck_layers(k, block.fc_batch_norm);
            layers.splice(block.output..block.output, insert);
        }
        Strategy::BneckMid(k) => {
            suffix = format!("bneck-mid-{k}");
            let insert = bneck_layers(k, block.fc_batch_norm);
            layers.splice(block.fc2..block.fc2, insert);
        }
        Strategy::FcResize(k) => {
            suffix = format!("fc-{k}");
            for idx in [block.fc1, block.fc2] {
                layers[idx] = LayerSpec::FullyConnected { out_dim: k };
            }
        }
        Strategy::GlobalAvgPool => {
            suffix = "global-avg-pool".into();
            let output = layers[block.output].clone();
            layers.truncate(block.flatten);
            layers.push(LayerSpec::GlobalAvgPool);
            layers.push(output);
        }
    }
    let mut reduced = ModelSpec::new(format!("{}+{}", base.name, suffix), base.input_shape, layers);
    reduced.validate()?;
    reduced.notes = base.notes.clone();
    Ok(reduced)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::{catalog, count_params, millions, Activation, Shape};

    fn total(strategy: Strategy) -> u64 {
        let base = catalog("alexnet-bn").unwrap();
        count_params(&apply_reduction(&base, strategy).unwrap())
            .unwrap()
            .total
    }

    #[test]
    fn global_avg_pool_exact_total() {
        assert_eq!(total(Strategy::GlobalAvgPool), 2_589_135);
        assert_eq!(millions(2_589_135), 2.59);
    }

    #[test]
    fn table_of_reductions() {
        let cases = [
            (Strategy::BneckFinal(64), 54.30),
            (Strategy::BneckFinal(256), 55.17),
            (Strategy::BneckFinal(1024), 58.63),
            (Strategy::BneckMid(64), 40.77),
            (Strategy::BneckMid(256), 42.29),
            (Strategy::BneckMid(1024), 48.41),
            (Strategy::FcResize(64), 3.07),
            (Strategy::FcResize(256), 4.95),
            (Strategy::FcResize(1024), 13.22),
            (Strategy::GlobalAvgPool, 2.59),
        ];
        for (strategy, expect) in cases {
            assert_eq!(millions(total(strategy)), expect, "{strategy:?}");
        }
    }

    #[test]
    fn width_monotonicity() {
        for make in [Strategy::BneckFinal as fn(usize) -> Strategy, Strategy::BneckMid, Strategy::FcResize] {
            let mut prev = 0;
            for k in [64, 256, 1024] {
                let t = total(make(k));
                assert!(t > prev, "{:?} not monotone", make(k));
                prev = t;
            }
        }
    }

    #[test]
    fn rejects_base_without_two_fcs() {
        let base = catalog("alexnet-bn").unwrap();
        let gap = apply_reduction(&base, Strategy::GlobalAvgPool).unwrap();
        assert!(apply_reduction(&gap, Strategy::BneckMid(64)).is_err());
    }

    #[test]
    fn parse_round_trips() {
        assert_eq!(Strategy::parse("bneck-mid-256").unwrap(), Strategy::BneckMid(256));
        assert_eq!(Strategy::parse("fc-64").unwrap(), Strategy::FcResize(64));
        assert_eq!(Strategy::parse("global-avg-pool").unwrap(), Strategy::GlobalAvgPool);
        assert!(Strategy::parse("bneck-top-64").is_err());
    }

    #[test]
    fn gap_output_dim_equals_last_conv_channels() {
        let base = catalog("alexnet-bn").unwrap();
        let gap = apply_reduction(&base, Strategy::GlobalAvgPool).unwrap();
        let trace = crate::modelspec::infer_shapes(&gap).unwrap();
        let pool = trace
            .layers
            .iter()
            .find(|e| e.label == "global_avg_pool")
            .unwrap();
        assert_eq!(pool.output, Shape::vector(256));
    }

    #[test]
    fn bneck_on_plain_alexnet_has_no_bn() {
        let base = catalog("alexnet").unwrap();
        let reduced = apply_reduction(&base, Strategy::BneckMid(64)).unwrap();
        let report = count_params(&reduced).unwrap();
        assert_eq!(report.bn_affine(), 0);
        let _ = Activation::Sigmoid; // silence unused import on some cfgs
    }
}

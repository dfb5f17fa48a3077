//! Epoch loop: shuffled mini-batches, clip-level validation, learning-rate
//! decay on plateau and early stopping.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, Dataset};
use crate::error::{Error, Result};
use crate::eval::{accuracy, aggregate_sample_scores, weighted_auc, ScoreTable};
use crate::modelspec::Activation;
use crate::scalar::Scalar;
use crate::tensor::{save_checkpoint, Mode, Network, Tensor};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before multiplying the learning
    /// rate by 0.1.
    pub lr_patience: usize,
    /// Epochs without validation improvement before stopping.
    pub stop_patience: usize,
    /// Fraction of clips held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 60,
            weight_decay: 0.0015,
            max_epochs: 30,
            lr_patience: 3,
            stop_patience: 6,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

/// One line of `history.jsonl`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_metric: f64,
    /// Wall-clock time; the only non-deterministic field.
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
}

/// Split distinct clip ids into train/validation sets. The held-out count is
/// `round(fraction * n_clips)`; at least 10 clips are required so both sides
/// are non-empty at the default fraction.
pub fn split_validation(clip_ids: &[String], fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if clip_ids.len() < 10 {
        return Err(Error::data(format!(
            "need at least 10 clips to hold out validation, got {}",
            clip_ids.len()
        )));
    }
    if !(0.0..1.0).contains(&fraction) || fraction <= 0.0 {
        return Err(Error::usage(format!("validation fraction {fraction} outside (0, 1)")));
    }
    let n_val = ((clip_ids.len() as f64 * fraction).round() as usize).max(1);
    let mut shuffled: Vec<String> = clip_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let val = shuffled[..n_val].to_vec();
    let train = shuffled[n_val..].to_vec();
    Ok((train, val))
}

/// One pass over the training indices in shuffled mini-batches. Returns the
/// mean per-batch loss.
pub fn train_epoch<F: Scalar>(
    net: &mut Network<F>,
    dataset: &Dataset<F>,
    train_indices: &[usize],
    adam: &mut Adam<F>,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if train_indices.is_empty() {
        return Err(Error::data("no training examples"));
    }
    let mut order: Vec<usize> = train_indices.to_vec();
    order.shuffle(rng);
    let example_shape: Vec<usize> = net.input_tensor_shape(1)[1..].to_vec();
    let loss_kind = net.loss_kind();
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(batch_size) {
        let (input, targets) = dataset.batch(chunk, &example_shape)?;
        net.zero_grads();
        let logits = net.forward_logits(&input, Mode::Train, rng)?;
        let (loss, grad) = loss_kind.compute(&logits, &targets)?;
        let loss = loss.to_f64_c();
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite training loss {loss}")));
        }
        net.backward(&grad)?;
        adam.step(net)?;
        total += loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Score the given examples, aggregate segment scores to clip level (mean),
/// and build a clip-level score table.
pub fn clip_score_table<F: Scalar>(
    net: &mut Network<F>,
    dataset: &Dataset<F>,
    indices: &[usize],
    batch_size: usize,
) -> Result<ScoreTable> {
    if indices.is_empty() {
        return Err(Error::data("no examples to score"));
    }
    let example_shape: Vec<usize> = net.input_tensor_shape(1)[1..].to_vec();
    let c = dataset.n_classes;

    let mut per_clip: HashMap<String, (Vec<Vec<f64>>, Vec<usize>)> = HashMap::new();
    let mut clip_order: Vec<String> = Vec::new();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (input, _) = dataset.batch(chunk, &example_shape)?;
        let scores = net.scores(&input)?;
        for (row, &idx) in chunk.iter().enumerate() {
            let ex = &dataset.examples[idx];
            let row_scores: Vec<f64> = scores.data[row * c..(row + 1) * c]
                .iter()
                .map(|&v| v.to_f64_c())
                .collect();
            let entry = per_clip.entry(ex.clip_id.clone()).or_insert_with(|| {
                clip_order.push(ex.clip_id.clone());
                (Vec::new(), ex.labels.clone())
            });
            entry.0.push(row_scores);
        }
    }

    let mut sample_ids = Vec::with_capacity(clip_order.len());
    let mut scores = Vec::with_capacity(clip_order.len() * c);
    let mut labels = vec![0u8; clip_order.len() * c];
    for (i, clip) in clip_order.iter().enumerate() {
        let (segs, clip_labels) = &per_clip[clip];
        scores.extend(aggregate_sample_scores(segs)?);
        for &l in clip_labels {
            labels[i * c + l] = 1;
        }
        sample_ids.push(clip.clone());
    }
    ScoreTable::new(sample_ids, c, scores, labels)
}

fn validation_metric<F: Scalar>(
    net: &mut Network<F>,
    dataset: &Dataset<F>,
    indices: &[usize],
    batch_size: usize,
) -> Result<f64> {
    let table = clip_score_table(net, dataset, indices, batch_size)?;
    match net.activation {
        Activation::Sigmoid => Ok(weighted_auc(&table)?.overall),
        Activation::Softmax => accuracy(&table),
    }
}

/// Train to convergence. Checkpoints of the best-so-far model (by validation
/// metric, higher is better) are written to `checkpoint_path` when given;
/// epoch records go to `history_path` as JSON lines.
pub fn fit<F: Scalar>(
    net: &mut Network<F>,
    dataset: &Dataset<F>,
    cfg: &TrainConfig,
    checkpoint_path: Option<&Path>,
    history_path: Option<&Path>,
) -> Result<FitReport> {
    dataset.validate()?;
    let clips = dataset.clip_ids();
    let (train_clips, val_clips) = split_validation(&clips, cfg.val_fraction, cfg.seed)?;
    let train_set: std::collections::HashSet<&String> = train_clips.iter().collect();
    let val_set: std::collections::HashSet<&String> = val_clips.iter().collect();
    let train_idx: Vec<usize> = (0..dataset.examples.len())
        .filter(|&i| train_set.contains(&dataset.examples[i].clip_id))
        .collect();
    let val_idx: Vec<usize> = (0..dataset.examples.len())
        .filter(|&i| val_set.contains(&dataset.examples[i].clip_id))
        .collect();

    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let mut history_file = match history_path {
        Some(p) => Some(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };

    let mut history = Vec::new();
    let mut best_metric = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0usize;
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let train_loss = train_epoch(net, dataset, &train_idx, &mut adam, cfg.batch_size, &mut rng)?;
        let val_metric = validation_metric(net, dataset, &val_idx, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            lr: adam.lr(),
            train_loss,
            val_metric,
            seconds: started.elapsed().as_secs_f64(),
        };
        if let Some(f) = history_file.as_mut() {
            let line = serde_json::to_string(&record).expect("epoch record serialization");
            writeln!(f, "{line}").map_err(|e| Error::io(history_path.unwrap(), e))?;
        }
        history.push(record);

        if val_metric > best_metric {
            best_metric = val_metric;
            best_epoch = epoch;
            stale = 0;
            if let Some(p) = checkpoint_path {
                save_checkpoint(p, net)?;
            }
        } else {
            stale += 1;
            if stale >= cfg.stop_patience {
                break;
            }
            if stale % cfg.lr_patience == 0 {
                adam.set_lr(adam.lr() * 0.1);
            }
        }
    }

    Ok(FitReport {
        history,
        best_epoch,
        best_metric,
    })
}

/// Build a dataset tensor view for a single example (used by inspection
/// tools and tests).
pub fn example_tensor<F: Scalar>(dataset: &Dataset<F>, idx: usize, example_shape: &[usize]) -> Result<Tensor<F>> {
    let (input, _) = dataset.batch(&[idx], example_shape)?;
    Ok(input)
}

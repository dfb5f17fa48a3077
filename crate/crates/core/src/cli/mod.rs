//! Command-line interface. Every subcommand is also callable as a library
//! function so integration tests can drive the same code paths in-process.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{accuracy, weighted_auc};
use crate::features::{
    build_mel_filterbank, read_lmel, read_lnrm, segment_clip, wav::read_wav_mono, write_lmel, write_lnrm,
    AudioClip, FrameSpec, NormAccumulator, NormStats, N_MELS, SAMPLE_RATE,
};
use crate::manifest::read_manifest;
use crate::modelspec::{
    apply_reduction, catalog, count_params, infer_shapes, millions, toy_gap_cnn, Activation, ModelSpec, Shape,
    Strategy,
};
use crate::scalar::Scalar;
use crate::synth::{write_dataset, SynthConfig};
use crate::tensor::{load_checkpoint, Network};
use crate::train::{clip_score_table, fit, Dataset, Example, TrainConfig};

#[derive(Parser)]
#[command(name = "segclass", version, about = "Segment-based audio classification workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Seed for all random choices (synthesis, init, shuffling).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Accepted for compatibility; runs are always deterministic for a
    /// fixed seed.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Numeric precision for model arithmetic.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic tone dataset (WAVs plus manifest).
    Synth(SynthArgs),
    /// Cut clips into 1-second segments and extract log-mel features.
    Featurize(FeaturizeArgs),
    /// Print a model's shape trace and exact parameter counts.
    Inspect(InspectArgs),
    /// Train a model on a featurized dataset.
    Train(TrainArgs),
    /// Score a featurized dataset with a trained model.
    Evaluate(EvaluateArgs),
}

pub fn run() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(args) => cmd_synth(args, cli.seed),
        Command::Featurize(args) => cmd_featurize(args),
        Command::Inspect(args) => cmd_inspect(args),
        Command::Train(args) => match cli.precision {
            Precision::F32 => cmd_train::<f32>(args, cli.seed),
            Precision::F64 => cmd_train::<f64>(args, cli.seed),
        },
        Command::Evaluate(args) => match cli.precision {
            Precision::F32 => cmd_evaluate::<f32>(args),
            Precision::F64 => cmd_evaluate::<f64>(args),
        },
    }
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory for wav/, manifest.csv and classes.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub clips: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 10.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 0.25)]
    pub multi_label_prob: f64,
}

pub fn cmd_synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let cfg = SynthConfig {
        n_clips: args.clips,
        n_classes: args.classes,
        clip_seconds: args.seconds,
        multi_label_prob: args.multi_label_prob,
        seed,
        ..SynthConfig::default()
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let manifest = write_dataset(&args.out, &cfg)?;
    println!(
        "wrote {} clips over {} classes to {}",
        manifest.rows.len(),
        manifest.classes.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// featurize

#[derive(Args)]
pub struct FeaturizeArgs {
    /// Dataset manifest CSV (classes.csv is read from the same directory).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for .lmel files, segments.csv, stats.lnrm, meta.json.
    #[arg(long)]
    pub out: PathBuf,
}

/// Feature-directory metadata.
#[derive(Serialize, Deserialize)]
pub struct FeatureMeta {
    pub n_classes: usize,
    pub n_mels: usize,
    pub n_frames: usize,
}

#[derive(Serialize, Deserialize)]
struct SegmentRow {
    segment_ref: String,
    clip_id: String,
    labels: String,
}

pub fn cmd_featurize(args: &FeaturizeArgs) -> Result<()> {
    let manifest = read_manifest(&args.manifest)?;
    if manifest.rows.is_empty() {
        return Err(Error::data("manifest has no clips"));
    }
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let frame_spec = FrameSpec::default();
    let fb = build_mel_filterbank(N_MELS, frame_spec.fft_len, SAMPLE_RATE, 0.0, 8000.0)?;
    let mut accumulator: Option<NormAccumulator> = None;
    let mut rows = Vec::new();
    let mut n_frames = 0usize;

    let mut skipped = 0usize;
    for row in &manifest.rows {
        // unreadable or too-short clips are skipped and counted, never fatal
        let samples = match read_wav_mono(&base.join(&row.wav_path), SAMPLE_RATE) {
            Ok(s) => s,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let start = (row.start_sec * SAMPLE_RATE as f64).round() as usize;
        let end = ((row.end_sec * SAMPLE_RATE as f64).round() as usize).min(samples.len());
        if start >= end {
            skipped += 1;
            continue;
        }
        let clip = AudioClip::new(row.clip_id.clone(), samples[start..end].to_vec(), SAMPLE_RATE, row.labels.clone())?;
        let segments = match segment_clip(&clip) {
            Ok(s) => s,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        for segment in segments {
            let features = crate::features::featurize_segment(&segment, &frame_spec, &fb, SAMPLE_RATE)?;
            n_frames = features.n_frames;
            write_lmel(&args.out.join(format!("{}.lmel", segment.segment_id())), &features)?;
            accumulator
                .get_or_insert_with(|| NormAccumulator::new(features.n_mels))
                .add(&features)?;
            rows.push(SegmentRow {
                segment_ref: segment.segment_id(),
                clip_id: row.clip_id.clone(),
                labels: row.labels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";"),
            });
        }
    }

    let stats = accumulator
        .ok_or_else(|| Error::data("no segments produced"))?
        .finalize()?;
    write_lnrm(&args.out.join("stats.lnrm"), &stats)?;

    let segments_path = args.out.join("segments.csv");
    let mut writer = csv::Writer::from_path(&segments_path).map_err(|e| Error::data(format!("{}: {e}", segments_path.display())))?;
    for row in &rows {
        writer
            .serialize(row)
            .map_err(|e| Error::data(format!("{}: {e}", segments_path.display())))?;
    }
    writer.flush().map_err(|e| Error::io(&segments_path, e))?;

    let meta = FeatureMeta {
        n_classes: manifest.n_classes(),
        n_mels: N_MELS,
        n_frames,
    };
    let meta_path = args.out.join("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("meta serialization"))
        .map_err(|e| Error::io(&meta_path, e))?;

    println!(
        "featurized {} segments from {} clips ({skipped} skipped) into {}",
        rows.len(),
        manifest.rows.len() - skipped,
        args.out.display()
    );
    Ok(())
}

/// Load a featurized directory into an in-memory dataset, applying the
/// stored normalization statistics.
pub fn load_features<F: Scalar>(dir: &Path) -> Result<(Dataset<F>, FeatureMeta)> {
    let meta_path = dir.join("meta.json");
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: FeatureMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::data(format!("{}: {e}", meta_path.display())))?;
    let stats: NormStats = read_lnrm(&dir.join("stats.lnrm"))?;

    let segments_path = dir.join("segments.csv");
    let mut reader =
        csv::Reader::from_path(&segments_path).map_err(|e| Error::data(format!("{}: {e}", segments_path.display())))?;
    let mut examples = Vec::new();
    for record in reader.deserialize::<SegmentRow>() {
        let row = record.map_err(|e| Error::data(format!("{}: {e}", segments_path.display())))?;
        let features = read_lmel(&dir.join(format!("{}.lmel", row.segment_ref)), &row.segment_ref)?;
        if features.n_mels != meta.n_mels || features.n_frames != meta.n_frames {
            return Err(Error::data(format!(
                "segment '{}': {}x{} features do not match dataset {}x{}",
                row.segment_ref, features.n_mels, features.n_frames, meta.n_mels, meta.n_frames
            )));
        }
        let features = crate::features::normalize(&features, &stats)?;
        let mut labels = Vec::new();
        for part in row.labels.split(';').filter(|p| !p.is_empty()) {
            labels.push(
                part.parse::<usize>()
                    .map_err(|_| Error::data(format!("segment '{}': bad label '{part}'", row.segment_ref)))?,
            );
        }
        examples.push(Example {
            clip_id: row.clip_id,
            segment_ref: row.segment_ref,
            input: features.values.iter().map(|&v| F::from_f64_c(v)).collect(),
            labels,
        });
    }
    let dataset = Dataset {
        input_len: meta.n_mels * meta.n_frames,
        n_classes: meta.n_classes,
        examples,
    };
    dataset.validate()?;
    Ok((dataset, meta))
}

// ---------------------------------------------------------------------------
// inspect

#[derive(Args)]
pub struct InspectArgs {
    /// Catalog model name (or "toy-gap").
    #[arg(long, conflicts_with = "spec")]
    pub model: Option<String>,
    /// JSON model-spec file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Complexity-reduction transform to apply first
    /// (bneck-final-N | bneck-mid-N | fc-N | gap).
    #[arg(long)]
    pub reduce: Option<String>,
    /// Override the number of output classes.
    #[arg(long)]
    pub classes: Option<usize>,
}

pub fn resolve_spec(model: Option<&str>, spec_path: Option<&Path>, reduce: Option<&str>, classes: Option<usize>) -> Result<ModelSpec> {
    let mut spec = match (model, spec_path) {
        (Some(name), None) => {
            if name == "toy-gap" {
                toy_gap_cnn(classes.unwrap_or(4), Activation::Sigmoid)
            } else {
                catalog(name)?
            }
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ModelSpec::from_json(&text)?
        }
        _ => return Err(Error::usage("provide exactly one of --model or --spec")),
    };
    if let Some(strategy) = reduce {
        let strategy = Strategy::parse(strategy)?;
        spec = apply_reduction(&spec, strategy)?;
    }
    if let Some(classes) = classes {
        spec = spec.with_classes(classes);
    }
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let spec = resolve_spec(args.model.as_deref(), args.spec.as_deref(), args.reduce.as_deref(), args.classes)?;
    print!("{}", inspect_text(&spec)?);
    Ok(())
}

pub fn inspect_text(spec: &ModelSpec) -> Result<String> {
    let trace = infer_shapes(spec)?;
    let report = count_params(spec)?;
    let mut out = String::new();
    out.push_str(&format!("model: {}\n", spec.name));
    out.push_str(&format!("input: {}\n\n", spec.input_shape));
    out.push_str(&format!("{:<4} {:<28} {:<16} {:>12}\n", "#", "layer", "output", "params"));
    for (entry, count) in trace.layers.iter().zip(&report.layers) {
        out.push_str(&format!(
            "{:<4} {:<28} {:<16} {:>12}\n",
            entry.index,
            entry.label,
            entry.output.to_string(),
            count.total()
        ));
    }
    out.push_str(&format!("\ntotal parameters: {} ({:.2}M)\n", report.total, millions(report.total)));
    for note in &report.notes {
        out.push_str(&format!("note: {note}\n"));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// train

#[derive(Args)]
pub struct TrainArgs {
    /// Featurized dataset directory (from `featurize`).
    #[arg(long)]
    pub features: PathBuf,
    /// Output directory for checkpoint.ssck, model.json, history.jsonl,
    /// config.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, conflicts_with = "spec")]
    pub model: Option<String>,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub reduce: Option<String>,
    /// JSON file with training-config overrides.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

pub fn cmd_train<F: Scalar>(args: &TrainArgs, seed: u64) -> Result<()> {
    let (dataset, meta) = load_features::<F>(&args.features)?;
    let spec = resolve_spec(args.model.as_deref(), args.spec.as_deref(), args.reduce.as_deref(), Some(meta.n_classes))?;
    let expected = Shape::map(1, meta.n_mels, meta.n_frames);
    if spec.input_shape != expected {
        return Err(Error::data(format!(
            "model expects input {}, dataset provides {}",
            spec.input_shape, expected
        )));
    }

    let mut cfg = TrainConfig { seed, ..TrainConfig::default() };
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg = serde_json::from_str(&text).map_err(|e| Error::usage(format!("{}: {e}", path.display())))?;
        cfg.seed = seed;
    }
    if let Some(lr) = args.lr {
        cfg.lr = lr;
    }
    if let Some(epochs) = args.epochs {
        cfg.max_epochs = epochs;
    }
    if let Some(batch) = args.batch_size {
        cfg.batch_size = batch;
    }

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut net = Network::<F>::from_spec(&spec, seed)?;
    let report = fit(
        &mut net,
        &dataset,
        &cfg,
        Some(&args.out.join("checkpoint.ssck")),
        Some(&args.out.join("history.jsonl")),
    )?;

    let model_path = args.out.join("model.json");
    std::fs::write(&model_path, spec.to_json()).map_err(|e| Error::io(&model_path, e))?;
    let config_path = args.out.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&cfg).expect("config serialization"))
        .map_err(|e| Error::io(&config_path, e))?;

    println!(
        "trained '{}' for {} epochs; best validation metric {:.4} at epoch {}",
        spec.name,
        report.history.len(),
        report.best_metric,
        report.best_epoch
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Args)]
pub struct EvaluateArgs {
    /// Featurized dataset directory to score.
    #[arg(long)]
    pub features: PathBuf,
    /// Training output directory (model.json + checkpoint.ssck).
    #[arg(long)]
    pub model_dir: PathBuf,
    /// Write the report as JSON to this path as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_evaluate<F: Scalar>(args: &EvaluateArgs) -> Result<()> {
    let (dataset, _meta) = load_features::<F>(&args.features)?;
    let model_path = args.model_dir.join("model.json");
    let text = std::fs::read_to_string(&model_path).map_err(|e| Error::io(&model_path, e))?;
    let spec = ModelSpec::from_json(&text)?;
    let mut net = Network::<F>::from_spec(&spec, 0)?;
    load_checkpoint(&args.model_dir.join("checkpoint.ssck"), &mut net)?;

    let indices: Vec<usize> = (0..dataset.examples.len()).collect();
    let table = clip_score_table(&mut net, &dataset, &indices, 60)?;
    match net.activation {
        Activation::Sigmoid => {
            let report = weighted_auc(&table)?;
            print!("{}", report.render());
            if let Some(path) = &args.out {
                std::fs::write(path, report.to_json()).map_err(|e| Error::io(path, e))?;
            }
        }
        Activation::Softmax => {
            let acc = accuracy(&table)?;
            println!("accuracy: {acc:.4} over {} samples", table.n_samples());
            if let Some(path) = &args.out {
                let json = serde_json::json!({ "accuracy": acc, "samples": table.n_samples() });
                std::fs::write(path, serde_json::to_string_pretty(&json).expect("report serialization"))
                    .map_err(|e| Error::io(path, e))?;
            }
        }
    }
    Ok(())
}

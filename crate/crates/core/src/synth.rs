//! Synthetic audio dataset generation.
//!
//! Each class is a pure tone at a mel-spaced frequency. A clip carries its
//! primary class tone plus low-level white noise; some clips mix in a second
//! class tone and carry both labels. Everything is deterministic in the
//! seed, so regenerated datasets are identical.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{hz_to_mel, mel_to_hz, AudioClip, SAMPLE_RATE};
use crate::manifest::{write_manifest, ClassEntry, Manifest, ManifestRow};

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub n_clips: usize,
    pub n_classes: usize,
    pub clip_seconds: f64,
    pub sample_rate: u32,
    /// Probability that a clip mixes in a second class and carries both
    /// labels.
    pub multi_label_prob: f64,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_clips: 60,
            n_classes: 4,
            clip_seconds: 10.0,
            sample_rate: SAMPLE_RATE,
            multi_label_prob: 0.25,
            noise_amplitude: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_clips == 0 || self.n_classes == 0 {
            return Err(Error::usage("synthesis needs at least one clip and one class"));
        }
        if self.clip_seconds < 1.0 {
            return Err(Error::usage("clips must be at least one second long"));
        }
        if !(0.0..=1.0).contains(&self.multi_label_prob) {
            return Err(Error::usage(format!(
                "multi-label probability {} outside [0, 1]",
                self.multi_label_prob
            )));
        }
        Ok(())
    }
}

/// Tone frequency for a class: classes are spaced evenly on the mel scale
/// between 300 Hz and 6 kHz so neighbouring classes stay separable after the
/// mel filterbank.
pub fn class_frequency(class: usize, n_classes: usize) -> f64 {
    let lo = hz_to_mel(300.0);
    let hi = hz_to_mel(6000.0);
    if n_classes == 1 {
        return mel_to_hz((lo + hi) / 2.0);
    }
    mel_to_hz(lo + (hi - lo) * class as f64 / (n_classes - 1) as f64)
}

fn tone(samples: &mut [f64], freq: f64, amplitude: f64, phase: f64, sample_rate: u32) {
    let w = 2.0 * std::f64::consts::PI * freq / sample_rate as f64;
    for (i, s) in samples.iter_mut().enumerate() {
        *s += amplitude * (w * i as f64 + phase).sin();
    }
}

/// Generate the in-memory clip set for a configuration.
pub fn synth_clips(cfg: &SynthConfig) -> Result<Vec<AudioClip>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let len = (cfg.clip_seconds * cfg.sample_rate as f64).round() as usize;
    let mut clips = Vec::with_capacity(cfg.n_clips);
    for i in 0..cfg.n_clips {
        // round-robin primary class keeps every class populated
        let primary = i % cfg.n_classes;
        let mut labels = vec![primary];
        let mut samples = vec![0.0f64; len];
        let amp = rng.gen_range(0.3..0.5);
        let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        tone(
            &mut samples,
            class_frequency(primary, cfg.n_classes),
            amp,
            phase,
            cfg.sample_rate,
        );
        if cfg.n_classes > 1 && rng.gen::<f64>() < cfg.multi_label_prob {
            let other = (primary + rng.gen_range(1..cfg.n_classes)) % cfg.n_classes;
            let amp2 = rng.gen_range(0.2..0.4);
            let phase2 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            tone(
                &mut samples,
                class_frequency(other, cfg.n_classes),
                amp2,
                phase2,
                cfg.sample_rate,
            );
            labels.push(other);
            labels.sort_unstable();
            labels.dedup();
        }
        for s in &mut samples {
            *s += cfg.noise_amplitude * (rng.gen::<f64>() * 2.0 - 1.0);
        }
        clips.push(AudioClip::new(
            format!("clip_{i:04}"),
            samples,
            cfg.sample_rate,
            labels,
        )?);
    }
    Ok(clips)
}

/// Synthesize a dataset on disk: `wav/clip_NNNN.wav` files plus
/// `manifest.csv` and `classes.csv` in `dir`. Returns the manifest.
pub fn write_dataset(dir: &Path, cfg: &SynthConfig) -> Result<Manifest> {
    let clips = synth_clips(cfg)?;
    let wav_dir = dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let mut rows = Vec::with_capacity(clips.len());
    for clip in &clips {
        let rel = format!("wav/{}.wav", clip.clip_id);
        crate::features::wav::write_wav_mono(&dir.join(&rel), &clip.samples, clip.sample_rate)?;
        rows.push(ManifestRow {
            clip_id: clip.clip_id.clone(),
            wav_path: rel,
            start_sec: 0.0,
            end_sec: clip.duration_seconds(),
            labels: clip.labels.clone(),
        });
    }
    let classes = (0..cfg.n_classes)
        .map(|c| ClassEntry {
            index: c,
            machine_id: format!("/synth/tone_{c:02}"),
            display_name: format!("Tone {:.0} Hz", class_frequency(c, cfg.n_classes)),
        })
        .collect();
    let manifest = Manifest { rows, classes };
    write_manifest(&dir.join("manifest.csv"), &manifest)?;
    Ok(manifest)
}

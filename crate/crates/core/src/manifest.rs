//! Dataset manifests: CSV rows describing clips, plus an optional class map.
//!
//! Manifest schema (header required):
//! `clip_id,wav_path,start_sec,end_sec,labels` with labels as
//! semicolon-separated class indices. Class map schema:
//! `index,machine_id,display_name`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clip_id: String,
    pub wav_path: String,
    pub start_sec: f64,
    pub end_sec: f64,
    /// Sorted, de-duplicated class indices.
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub index: usize,
    pub machine_id: String,
    pub display_name: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub classes: Vec<ClassEntry>,
}

impl Manifest {
    /// Number of classes: from the class map when present, otherwise one
    /// past the highest label index used.
    pub fn n_classes(&self) -> usize {
        if !self.classes.is_empty() {
            return self.classes.len();
        }
        self.rows
            .iter()
            .flat_map(|r| r.labels.iter())
            .max()
            .map(|&m| m + 1)
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let n_classes = self.n_classes();
        for row in &self.rows {
            if row.end_sec <= row.start_sec {
                return Err(Error::data(format!(
                    "clip '{}': end_sec {} must exceed start_sec {}",
                    row.clip_id, row.end_sec, row.start_sec
                )));
            }
            if let Some(&bad) = row.labels.iter().find(|&&l| l >= n_classes) {
                return Err(Error::data(format!(
                    "clip '{}': label {bad} outside class map of size {n_classes}",
                    row.clip_id
                )));
            }
        }
        Ok(())
    }
}

fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for part in text.split(';').filter(|p| !p.is_empty()) {
        labels.push(
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::data(format!("bad label index '{part}'")))?,
        );
    }
    labels.sort_unstable();
    labels.dedup();
    Ok(labels)
}

fn format_labels(labels: &[usize]) -> String {
    labels
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Serialize, Deserialize)]
struct RawRow {
    clip_id: String,
    wav_path: String,
    start_sec: f64,
    end_sec: f64,
    labels: String,
}

/// Read the manifest CSV (and `classes.csv` next to it, if present).
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.deserialize::<RawRow>() {
        let raw = record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        rows.push(ManifestRow {
            clip_id: raw.clip_id,
            wav_path: raw.wav_path,
            start_sec: raw.start_sec,
            end_sec: raw.end_sec,
            labels: parse_labels(&raw.labels)?,
        });
    }
    let classes_path = path.with_file_name("classes.csv");
    let classes = if classes_path.exists() {
        read_class_map(&classes_path)?
    } else {
        Vec::new()
    };
    let manifest = Manifest { rows, classes };
    manifest.validate()?;
    Ok(manifest)
}

pub fn read_class_map(path: &Path) -> Result<Vec<ClassEntry>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let mut classes = Vec::new();
    for record in reader.deserialize::<ClassEntry>() {
        classes.push(record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?);
    }
    Ok(classes)
}

/// Write manifest rows (and the class map when non-empty, as `classes.csv`
/// beside the manifest).
pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    for row in &manifest.rows {
        writer
            .serialize(RawRow {
                clip_id: row.clip_id.clone(),
                wav_path: row.wav_path.clone(),
                start_sec: row.start_sec,
                end_sec: row.end_sec,
                labels: format_labels(&row.labels),
            })
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    if !manifest.classes.is_empty() {
        let classes_path = path.with_file_name("classes.csv");
        let mut writer =
            csv::Writer::from_path(&classes_path).map_err(|e| Error::data(format!("{}: {e}", classes_path.display())))?;
        for entry in &manifest.classes {
            writer
                .serialize(entry)
                .map_err(|e| Error::data(format!("{}: {e}", classes_path.display())))?;
        }
        writer.flush().map_err(|e| Error::io(&classes_path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Manifest {
        Manifest {
            rows: vec![
                ManifestRow {
                    clip_id: "clip_000".into(),
                    wav_path: "wav/clip_000.wav".into(),
                    start_sec: 0.0,
                    end_sec: 10.0,
                    labels: vec![0, 3],
                },
                ManifestRow {
                    clip_id: "clip_001".into(),
                    wav_path: "wav/clip_001.wav".into(),
                    start_sec: 0.0,
                    end_sec: 10.0,
                    labels: vec![1],
                },
            ],
            classes: vec![
                ClassEntry {
                    index: 0,
                    machine_id: "/m/0".into(),
                    display_name: "Tone A".into(),
                },
                ClassEntry {
                    index: 1,
                    machine_id: "/m/1".into(),
                    display_name: "Tone B".into(),
                },
                ClassEntry {
                    index: 2,
                    machine_id: "/m/2".into(),
                    display_name: "Tone C".into(),
                },
                ClassEntry {
                    index: 3,
                    machine_id: "/m/3".into(),
                    display_name: "Tone D".into(),
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let manifest = sample();
        write_manifest(&path, &manifest).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, manifest);
    }

    #[test]
    fn rejects_label_outside_class_map() {
        let mut manifest = sample();
        manifest.rows[0].labels = vec![9];
        assert!(manifest.validate().is_err());
    }

    #[test]
    fn rejects_inverted_times() {
        let mut manifest = sample();
        manifest.rows[0].end_sec = -1.0;
        assert!(manifest.validate().is_err());
    }

    #[test]
    fn labels_parse_and_dedup() {
        assert_eq!(parse_labels("3;1;3").unwrap(), vec![1, 3]);
        assert_eq!(parse_labels("").unwrap(), Vec::<usize>::new());
        assert!(parse_labels("a;b").is_err());
    }
}

//! Dataset file formats: per-recording CSV files plus a JSON manifest.
//!
//! One CSV per subject x location with header `t,x,y,z,label`; `t` is in
//! seconds and must be monotone. Labels are free strings: the four posture
//! names plus arbitrary non-lying activity labels, which the loader drops
//! during segmentation. The manifest lists every file with its metadata and
//! declares the axis convention.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    segment_into_episodes, AccelSample, Dataset, LabeledStream, PostureLabel, SensorLocation,
    SignalError, AXIS_CONVENTION,
};
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("manifest parse error on {path}: {source}")]
    Manifest {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("time column is not monotone in {path} at row {row}")]
    NonMonotoneTime { path: PathBuf, row: usize },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Manifest entry for one recording file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest file.
    pub path: String,
    pub subject_id: String,
    pub location: SensorLocation,
    pub sample_rate_hz: f64,
    pub provenance: String,
}

/// Dataset manifest: declared axis convention plus the file list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub provenance: String,
    pub axis_convention: String,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    label: String,
}

/// Label written between consecutive episodes of a recording so that
/// segmentation can never merge two adjacent episodes of the same posture.
const SEPARATOR_LABEL: &str = "transition";

pub fn load_manifest(path: &Path) -> Result<Manifest, DataIoError> {
    let text = fs::read_to_string(path).map_err(|source| DataIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| DataIoError::Manifest {
        path: path.to_path_buf(),
        source,
    })
}

fn load_stream(csv_path: &Path, entry: &ManifestEntry) -> Result<LabeledStream, DataIoError> {
    let mut reader = csv::Reader::from_path(csv_path).map_err(|source| DataIoError::Csv {
        path: csv_path.to_path_buf(),
        source,
    })?;
    let mut samples = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (row_idx, row) in reader.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|source| DataIoError::Csv {
            path: csv_path.to_path_buf(),
            source,
        })?;
        if row.t <= last_t {
            return Err(DataIoError::NonMonotoneTime {
                path: csv_path.to_path_buf(),
                row: row_idx,
            });
        }
        last_t = row.t;
        samples.push((AccelSample::new(row.x, row.y, row.z), row.label));
    }
    Ok(LabeledStream {
        samples,
        sample_rate_hz: entry.sample_rate_hz,
        subject_id: entry.subject_id.clone(),
        location: entry.location,
        provenance: entry.provenance.clone(),
    })
}

/// Loads a dataset from a manifest, segmenting each recording into lying
/// posture episodes. `label_set` declares the task's labels up front;
/// runs with other labels are dropped.
pub fn load_dataset(
    manifest_path: &Path,
    label_set: &[PostureLabel],
) -> Result<Dataset, DataIoError> {
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut episodes = Vec::new();
    for entry in &manifest.files {
        let csv_path = base.join(&entry.path);
        let stream = load_stream(&csv_path, entry)?;
        episodes.extend(segment_into_episodes(&stream, label_set)?);
    }
    Ok(Dataset {
        episodes,
        label_set: label_set.to_vec(),
        provenance: manifest.provenance,
        axis_convention: manifest.axis_convention,
    })
}

/// Writes a dataset as one CSV per subject x location plus `manifest.json`
/// in `dir`. A single separator row labeled `transition` is written between
/// consecutive episodes so reloading reproduces the exact episode
/// boundaries. Returns the manifest path.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf, DataIoError> {
    fs::create_dir_all(dir).map_err(|source| DataIoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;

    // Group episode indices by (subject, location), preserving order.
    let mut groups: Vec<((String, SensorLocation), Vec<usize>)> = Vec::new();
    for (i, e) in ds.episodes.iter().enumerate() {
        let key = (e.subject_id.clone(), e.location);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, idxs)) => idxs.push(i),
            None => groups.push((key, vec![i])),
        }
    }

    let mut entries = Vec::new();
    for ((subject_id, location), idxs) in &groups {
        let first = &ds.episodes[idxs[0]];
        let file_name = format!("{}_{}.csv", subject_id, location.name());
        let csv_path = dir.join(&file_name);
        let mut writer = csv::Writer::from_path(&csv_path).map_err(|source| DataIoError::Csv {
            path: csv_path.clone(),
            source,
        })?;
        let dt = 1.0 / first.sample_rate_hz;
        let mut tick: u64 = 0;
        for (k, &ei) in idxs.iter().enumerate() {
            let e = &ds.episodes[ei];
            if k > 0 {
                writer
                    .serialize(CsvRow {
                        t: tick as f64 * dt,
                        x: 0.0,
                        y: 0.0,
                        z: 0.0,
                        label: SEPARATOR_LABEL.to_string(),
                    })
                    .map_err(|source| DataIoError::Csv {
                        path: csv_path.clone(),
                        source,
                    })?;
                tick += 1;
            }
            for s in &e.samples {
                writer
                    .serialize(CsvRow {
                        t: tick as f64 * dt,
                        x: s.x,
                        y: s.y,
                        z: s.z,
                        label: e.label.name().to_string(),
                    })
                    .map_err(|source| DataIoError::Csv {
                        path: csv_path.clone(),
                        source,
                    })?;
                tick += 1;
            }
        }
        writer.flush().map_err(|source| DataIoError::Io {
            path: csv_path.clone(),
            source,
        })?;
        entries.push(ManifestEntry {
            path: file_name,
            subject_id: subject_id.clone(),
            location: *location,
            sample_rate_hz: first.sample_rate_hz,
            provenance: first.provenance.clone(),
        });
    }

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        provenance: ds.provenance.clone(),
        axis_convention: if ds.axis_convention.is_empty() {
            AXIS_CONVENTION.to_string()
        } else {
            ds.axis_convention.clone()
        },
        files: entries,
    };
    let manifest_path = dir.join("manifest.json");
    let mut f = fs::File::create(&manifest_path).map_err(|source| DataIoError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    f.write_all(text.as_bytes())
        .map_err(|source| DataIoError::Io {
            path: manifest_path.clone(),
            source,
        })?;
    f.write_all(b"\n").map_err(|source| DataIoError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    Ok(manifest_path)
}

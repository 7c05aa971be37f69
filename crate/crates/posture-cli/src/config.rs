//! Experiment configuration file and run provenance.
//!
//! A run is described by one JSON config plus flag overrides (flags win).
//! Every output directory gets a `provenance.json` recording the artifact
//! version, the seed, and a hash of the effective configuration, so any
//! result can be regenerated exactly.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use posture_core::eval::experiment::{ModelSpec, SplitSpec};
use posture_core::synth::SynthConfig;

/// Where episodes come from: a recorded dataset manifest or the synthetic
/// generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    Manifest { manifest: PathBuf },
    Synth { synth: SynthConfig },
}

/// The experiment config file. Every field is optional; commands reject
/// missing pieces they need with a usage error.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<ModelSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    /// Sensor-location filter (location names).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locations: Option<Vec<String>>,
    /// Declared posture label set (posture names).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub postures: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// Reproducibility record stamped into every run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact_version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, effective_config: &impl Serialize) -> Self {
        let canonical = serde_json::to_string(effective_config).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        Provenance {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_sha256: format!("{:x}", hasher.finalize()),
        }
    }
}

//! Raw-signal domain types and data preparation.
//!
//! An [`Episode`] is the unit of classification: one contiguous run of a
//! single lying posture by one subject at one sensor site. The operations
//! here cover everything between raw labeled samples and model input:
//! per-episode normalization, run-length segmentation, sliding windows,
//! long-episode splitting, under-sampling, and dataset integration.
//!
//! All functions are pure over immutable inputs; the randomized ones take an
//! explicit seed and are deterministic.

pub mod io;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by signal preparation.
#[derive(Debug, Error)]
pub enum SignalError {
    #[error("signal has zero median magnitude; cannot normalize")]
    ZeroSignal,
    #[error("non-finite sample value encountered")]
    NonFinite,
    #[error("input stream is empty")]
    EmptyStream,
    #[error("episode of {len} samples is shorter than the window of {window_len}")]
    EpisodeTooShort { len: usize, window_len: usize },
    #[error("dataset contains no episodes")]
    EmptyDataset,
    #[error("window spec invalid: window_len {window_len} (need >= 2), overlap {overlap} (need 0 <= overlap < 1)")]
    InvalidWindowSpec { window_len: usize, overlap: f64 },
    #[error("axis conventions differ: {a:?} vs {b:?}")]
    AxisConventionMismatch { a: String, b: String },
    #[error("unknown posture label {0:?}")]
    UnknownLabel(String),
}

/// One tri-axial accelerometer reading in gravity units.
///
/// Axis convention: `x` lateral, `y` vertical (head-feet), `z` frontal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AccelSample {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Euclidean norm of the acceleration vector.
    pub fn magnitude(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn scaled(&self, c: f64) -> Self {
        Self::new(self.x * c, self.y * c, self.z * c)
    }
}

/// The four lying postures. Three-class tasks simply declare a smaller
/// label set; the enum order is the canonical tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostureLabel {
    Supine,
    Prone,
    LeftSide,
    RightSide,
}

impl PostureLabel {
    pub const ALL: [PostureLabel; 4] = [
        PostureLabel::Supine,
        PostureLabel::Prone,
        PostureLabel::LeftSide,
        PostureLabel::RightSide,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PostureLabel::Supine => "supine",
            PostureLabel::Prone => "prone",
            PostureLabel::LeftSide => "left_side",
            PostureLabel::RightSide => "right_side",
        }
    }

    /// Parses a label string; returns `None` for non-lying activity labels.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "supine" => Some(PostureLabel::Supine),
            "prone" => Some(PostureLabel::Prone),
            "left_side" => Some(PostureLabel::LeftSide),
            "right_side" => Some(PostureLabel::RightSide),
            _ => None,
        }
    }
}

impl std::fmt::Display for PostureLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The nine wearing sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorLocation {
    Chest,
    LeftThigh,
    RightThigh,
    LeftAnkle,
    RightAnkle,
    LeftArm,
    RightArm,
    LeftWrist,
    RightWrist,
}

impl SensorLocation {
    pub const ALL: [SensorLocation; 9] = [
        SensorLocation::Chest,
        SensorLocation::LeftThigh,
        SensorLocation::RightThigh,
        SensorLocation::LeftAnkle,
        SensorLocation::RightAnkle,
        SensorLocation::LeftArm,
        SensorLocation::RightArm,
        SensorLocation::LeftWrist,
        SensorLocation::RightWrist,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SensorLocation::Chest => "chest",
            SensorLocation::LeftThigh => "left_thigh",
            SensorLocation::RightThigh => "right_thigh",
            SensorLocation::LeftAnkle => "left_ankle",
            SensorLocation::RightAnkle => "right_ankle",
            SensorLocation::LeftArm => "left_arm",
            SensorLocation::RightArm => "right_arm",
            SensorLocation::LeftWrist => "left_wrist",
            SensorLocation::RightWrist => "right_wrist",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|l| l.name() == s)
    }
}

impl std::fmt::Display for SensorLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One labeled run of a posture: a time-ordered sample sequence plus
/// subject/sensor metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub samples: Vec<AccelSample>,
    pub sample_rate_hz: f64,
    pub subject_id: String,
    pub location: SensorLocation,
    pub label: PostureLabel,
    /// Source tag carried through splitting and integration.
    pub provenance: String,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// A labeled collection of episodes with a declared, ordered label set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub episodes: Vec<Episode>,
    pub label_set: Vec<PostureLabel>,
    pub provenance: String,
    /// Declared axis semantics; datasets must agree before integration.
    pub axis_convention: String,
}

/// The default axis declaration used throughout: x lateral, y vertical,
/// z frontal.
pub const AXIS_CONVENTION: &str = "x=lateral,y=vertical,z=frontal";

impl Dataset {
    pub fn new(episodes: Vec<Episode>, label_set: Vec<PostureLabel>, provenance: &str) -> Self {
        Self {
            episodes,
            label_set,
            provenance: provenance.to_string(),
            axis_convention: AXIS_CONVENTION.to_string(),
        }
    }

    /// Episodes recorded at `location`, keeping the label set and tags.
    pub fn filter_location(&self, location: SensorLocation) -> Dataset {
        Dataset {
            episodes: self
                .episodes
                .iter()
                .filter(|e| e.location == location)
                .cloned()
                .collect(),
            label_set: self.label_set.clone(),
            provenance: self.provenance.clone(),
            axis_convention: self.axis_convention.clone(),
        }
    }

    /// Per-label episode counts in label-set order.
    pub fn label_counts(&self) -> Vec<usize> {
        self.label_set
            .iter()
            .map(|l| self.episodes.iter().filter(|e| e.label == *l).count())
            .collect()
    }
}

/// A contiguous slice of an episode produced by [`sliding_windows`].
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub samples: &'a [AccelSample],
    /// Index of the first sample within the parent episode.
    pub start: usize,
}

impl<'a> Window<'a> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A raw labeled sample stream, the unit the loaders produce before
/// episode segmentation. Labels are free strings: lying postures plus
/// arbitrary non-lying activities.
#[derive(Debug, Clone)]
pub struct LabeledStream {
    pub samples: Vec<(AccelSample, String)>,
    pub sample_rate_hz: f64,
    pub subject_id: String,
    pub location: SensorLocation,
    pub provenance: String,
}

/// Scales an episode so the median per-sample magnitude is exactly one
/// gravity unit. All samples are multiplied by the same scalar; metadata is
/// unchanged. Removes subject- and device-level gain differences (including
/// signals left in raw analog units).
pub fn normalize_episode(ep: &Episode) -> Result<Episode, SignalError> {
    if ep.samples.iter().any(|s| !s.is_finite()) {
        return Err(SignalError::NonFinite);
    }
    let med = median_magnitude(&ep.samples).ok_or(SignalError::EmptyStream)?;
    if med == 0.0 {
        return Err(SignalError::ZeroSignal);
    }
    let c = 1.0 / med;
    Ok(Episode {
        samples: ep.samples.iter().map(|s| s.scaled(c)).collect(),
        ..ep.clone()
    })
}

/// Median of the per-sample vector magnitudes (even counts average the two
/// middle order statistics).
pub fn median_magnitude(samples: &[AccelSample]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut mags: Vec<f64> = samples.iter().map(|s| s.magnitude()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).expect("finite magnitudes"));
    let n = mags.len();
    Some(if n % 2 == 1 {
        mags[n / 2]
    } else {
        0.5 * (mags[n / 2 - 1] + mags[n / 2])
    })
}

/// Splits a labeled stream into maximal same-label runs and keeps the runs
/// whose label is one of `lying_labels`. Time order is preserved; metadata
/// is copied onto every episode.
pub fn segment_into_episodes(
    stream: &LabeledStream,
    lying_labels: &[PostureLabel],
) -> Result<Vec<Episode>, SignalError> {
    if stream.samples.is_empty() {
        return Err(SignalError::EmptyStream);
    }
    let mut episodes = Vec::new();
    let mut run_start = 0;
    let flush = |start: usize, end: usize, label: &str, episodes: &mut Vec<Episode>| {
        if let Some(lab) = PostureLabel::parse(label) {
            if lying_labels.contains(&lab) {
                episodes.push(Episode {
                    samples: stream.samples[start..end].iter().map(|(s, _)| *s).collect(),
                    sample_rate_hz: stream.sample_rate_hz,
                    subject_id: stream.subject_id.clone(),
                    location: stream.location,
                    label: lab,
                    provenance: stream.provenance.clone(),
                });
            }
        }
    };
    for i in 1..stream.samples.len() {
        if stream.samples[i].1 != stream.samples[run_start].1 {
            flush(run_start, i, &stream.samples[run_start].1, &mut episodes);
            run_start = i;
        }
    }
    flush(
        run_start,
        stream.samples.len(),
        &stream.samples[run_start].1,
        &mut episodes,
    );
    Ok(episodes)
}

/// Stride implied by a window length and overlap fraction: round-half-up of
/// `window_len * (1 - overlap)`, never less than one sample.
pub fn window_stride(window_len: usize, overlap: f64) -> usize {
    ((window_len as f64 * (1.0 - overlap)) + 0.5)
        .floor()
        .max(1.0) as usize
}

/// Full sliding windows over an episode. The last full window is retained
/// and trailing samples that cannot fill a window are discarded.
///
/// This is the training path: episodes shorter than the window are an
/// error. Inference on short episodes falls back to
/// [`whole_episode_window`].
pub fn sliding_windows(
    ep: &Episode,
    window_len: usize,
    overlap: f64,
) -> Result<Vec<Window<'_>>, SignalError> {
    if window_len < 2 || !(0.0..1.0).contains(&overlap) {
        return Err(SignalError::InvalidWindowSpec {
            window_len,
            overlap,
        });
    }
    let len = ep.len();
    if len < window_len {
        return Err(SignalError::EpisodeTooShort { len, window_len });
    }
    let stride = window_stride(window_len, overlap);
    let count = (len - window_len) / stride + 1;
    Ok((0..count)
        .map(|i| {
            let start = i * stride;
            Window {
                samples: &ep.samples[start..start + window_len],
                start,
            }
        })
        .collect())
}

/// Single window covering the whole episode; the inference fallback for
/// episodes shorter than the training window.
pub fn whole_episode_window(ep: &Episode) -> Window<'_> {
    Window {
        samples: &ep.samples,
        start: 0,
    }
}

/// Minimum episode length (in samples) over a training dataset; defines the
/// feature-pipeline window size.
pub fn min_episode_length(train: &Dataset) -> Result<usize, SignalError> {
    train
        .episodes
        .iter()
        .map(|e| e.len())
        .min()
        .ok_or(SignalError::EmptyDataset)
}

/// Cuts an episode into consecutive non-overlapping chunks of exactly
/// `chunk_len` samples, discarding the trailing remainder. An episode
/// shorter than one chunk yields an empty list.
pub fn split_long_episode(ep: &Episode, chunk_len: usize) -> Vec<Episode> {
    assert!(chunk_len >= 1, "chunk_len must be at least 1");
    (0..ep.len() / chunk_len)
        .map(|i| Episode {
            samples: ep.samples[i * chunk_len..(i + 1) * chunk_len].to_vec(),
            ..ep.clone()
        })
        .collect()
}

/// Randomly under-samples every label down to the smallest per-label count
/// among labels actually present. Retained episodes are unmodified and keep
/// their original order; the choice is deterministic in the seed.
pub fn undersample_balance(ds: &Dataset, rng_seed: u64) -> Result<Dataset, SignalError> {
    if ds.episodes.is_empty() {
        return Err(SignalError::EmptyDataset);
    }
    let counts = ds.label_counts();
    let min_count = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut keep = vec![false; ds.episodes.len()];
    for label in &ds.label_set {
        let mut idx: Vec<usize> = ds
            .episodes
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == *label)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(min_count) {
            keep[i] = true;
        }
    }
    Ok(Dataset {
        episodes: ds
            .episodes
            .iter()
            .enumerate()
            .filter(|(i, _)| keep[*i])
            .map(|(_, e)| e.clone())
            .collect(),
        label_set: ds.label_set.clone(),
        provenance: ds.provenance.clone(),
        axis_convention: ds.axis_convention.clone(),
    })
}

/// Unions two datasets restricted to the sensor locations they share.
/// Episode order is `a` then `b`; per-episode provenance tags are kept and
/// the label set is the ordered union.
pub fn integrate_datasets(
    a: &Dataset,
    b: &Dataset,
    common_locations: &[SensorLocation],
) -> Result<Dataset, SignalError> {
    if a.axis_convention != b.axis_convention {
        return Err(SignalError::AxisConventionMismatch {
            a: a.axis_convention.clone(),
            b: b.axis_convention.clone(),
        });
    }
    let mut label_set = a.label_set.clone();
    for l in &b.label_set {
        if !label_set.contains(l) {
            label_set.push(*l);
        }
    }
    let episodes = a
        .episodes
        .iter()
        .chain(b.episodes.iter())
        .filter(|e| common_locations.contains(&e.location))
        .cloned()
        .collect();
    Ok(Dataset {
        episodes,
        label_set,
        provenance: format!("{}+{}", a.provenance, b.provenance),
        axis_convention: a.axis_convention.clone(),
    })
}

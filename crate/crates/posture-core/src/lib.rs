//! Lying-posture classification from a single tri-axial accelerometer.
//!
//! The crate covers the full pipeline at library level:
//!
//! * [`signal`] — raw-signal types (episodes, datasets, windows) and every
//!   data-preparation step: normalization, run-length segmentation, sliding
//!   windows, long-episode splitting, class balancing, dataset integration,
//!   and CSV/manifest I/O.
//! * [`features`] — the fixed 48-slot time-domain feature vector computed per
//!   window and averaged into per-episode meta-features.
//! * [`ensemble`] — a bagged ensemble of CART decision trees over
//!   meta-features with majority-vote prediction and impurity-decrease
//!   feature importance.
//! * [`adalstm`] — a from-scratch bidirectional LSTM sequence classifier
//!   trained with length-weighted cross-entropy, Adam, and a decaying
//!   learning-rate schedule (the fixed-rate variant is a configuration).
//! * [`baselines`] — LDA and linear SVM on per-axis episode means.
//! * [`eval`] — cross-validation splitters, confusion matrices, macro
//!   metrics, coefficient-of-variation analysis, the Kruskal–Wallis test,
//!   and the experiment runner that ties everything together.
//! * [`synth`] — a gravity-orientation generator producing labeled synthetic
//!   recordings in the same CSV/manifest schema the loaders consume.
//!
//! Every randomized operation takes an explicit seed and is deterministic;
//! identical inputs produce byte-identical serialized outputs.

pub mod adalstm;
pub mod baselines;
pub mod ensemble;
pub mod eval;
pub mod features;
pub mod seeds;
pub mod signal;
pub mod synth;

pub use signal::{AccelSample, Dataset, Episode, PostureLabel, SensorLocation, Window};

/// Version tag stamped into persisted model and report files.
pub const SCHEMA_VERSION: u32 = 1;

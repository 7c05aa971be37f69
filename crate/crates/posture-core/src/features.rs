//! Time-domain window features and per-episode meta-features.
//!
//! Every window yields a fixed 48-slot vector. Per-axis features occupy
//! consecutive slots in axis order (x, y, z); the canonical slot numbers are
//! 1-based and exposed through [`feature_index`]:
//!
//! | feature | slots | feature | slots |
//! |---------|-------|---------|-------|
//! | AMP     | 1-3   | ZCR     | 28-30 |
//! | MED     | 4-6   | ENT     | 31-33 |
//! | MEAN    | 7-9   | SKN     | 34-36 |
//! | MAX     | 10-12 | KRT     | 37-39 |
//! | MIN     | 13-15 | MAG     | 40    |
//! | VAR     | 16-18 | ENG     | 41    |
//! | STD     | 19-21 | RNG     | 42-44 |
//! | RMS     | 22-24 | ANG     | 45    |
//! | P2P     | 25-27 | MAD     | 46-48 |
//!
//! Conventions that matter downstream:
//! * VAR/STD use the sample (N-1) denominator; SKN/KRT normalize the 1/N
//!   central moments by that sample deviation and return 0 for
//!   zero-variance windows.
//! * RMS is the mean of squared samples (no square root).
//! * ZCR counts sign changes between consecutive samples over N-1, with 0
//!   treated as positive.
//! * ENT is the Shannon entropy (natural log) of a 16-bin histogram over
//!   the window's own value range; constant windows score 0.
//! * MAG is the mean vector magnitude, ENG the summed squared magnitude.
//! * ANG is the largest frontal tilt angle `atan2(z, sqrt(x^2 + y^2))`
//!   over the window, in radians.
//! * P2P and RNG are the same quantity and are bit-equal by construction.

use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

use crate::signal::{sliding_windows, Episode, SignalError, Window};

pub const FEATURE_COUNT: usize = 48;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("window of {0} samples is too short; need at least 2")]
    WindowTooShort(usize),
    #[error("non-finite sample in window")]
    NonFinite,
    #[error("unknown feature mnemonic {0:?}")]
    UnknownFeature(String),
    #[error("{0:?} is a per-axis feature; an axis is required")]
    AxisRequired(FeatureName),
    #[error("{0:?} is a scalar feature; no axis applies")]
    AxisForbidden(FeatureName),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn offset(&self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// The eighteen feature mnemonics of the extraction table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureName {
    Amp,
    Med,
    Mean,
    Max,
    Min,
    Var,
    Std,
    Rms,
    P2p,
    Zcr,
    Ent,
    Skn,
    Krt,
    Mag,
    Eng,
    Rng,
    Ang,
    Mad,
}

impl FeatureName {
    pub const ALL: [FeatureName; 18] = [
        FeatureName::Amp,
        FeatureName::Med,
        FeatureName::Mean,
        FeatureName::Max,
        FeatureName::Min,
        FeatureName::Var,
        FeatureName::Std,
        FeatureName::Rms,
        FeatureName::P2p,
        FeatureName::Zcr,
        FeatureName::Ent,
        FeatureName::Skn,
        FeatureName::Krt,
        FeatureName::Mag,
        FeatureName::Eng,
        FeatureName::Rng,
        FeatureName::Ang,
        FeatureName::Mad,
    ];

    /// First 1-based slot of this feature.
    fn base(&self) -> usize {
        match self {
            FeatureName::Amp => 1,
            FeatureName::Med => 4,
            FeatureName::Mean => 7,
            FeatureName::Max => 10,
            FeatureName::Min => 13,
            FeatureName::Var => 16,
            FeatureName::Std => 19,
            FeatureName::Rms => 22,
            FeatureName::P2p => 25,
            FeatureName::Zcr => 28,
            FeatureName::Ent => 31,
            FeatureName::Skn => 34,
            FeatureName::Krt => 37,
            FeatureName::Mag => 40,
            FeatureName::Eng => 41,
            FeatureName::Rng => 42,
            FeatureName::Ang => 45,
            FeatureName::Mad => 46,
        }
    }

    pub fn per_axis(&self) -> bool {
        !matches!(self, FeatureName::Mag | FeatureName::Eng | FeatureName::Ang)
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            FeatureName::Amp => "AMP",
            FeatureName::Med => "MED",
            FeatureName::Mean => "MEAN",
            FeatureName::Max => "MAX",
            FeatureName::Min => "MIN",
            FeatureName::Var => "VAR",
            FeatureName::Std => "STD",
            FeatureName::Rms => "RMS",
            FeatureName::P2p => "P2P",
            FeatureName::Zcr => "ZCR",
            FeatureName::Ent => "ENT",
            FeatureName::Skn => "SKN",
            FeatureName::Krt => "KRT",
            FeatureName::Mag => "MAG",
            FeatureName::Eng => "ENG",
            FeatureName::Rng => "RNG",
            FeatureName::Ang => "ANG",
            FeatureName::Mad => "MAD",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.mnemonic().eq_ignore_ascii_case(s))
    }
}

/// Canonical 1-based slot number for a feature (and axis, when per-axis).
pub fn feature_index(name: FeatureName, axis: Option<Axis>) -> Result<usize, FeatureError> {
    match (name.per_axis(), axis) {
        (true, Some(a)) => Ok(name.base() + a.offset()),
        (true, None) => Err(FeatureError::AxisRequired(name)),
        (false, None) => Ok(name.base()),
        (false, Some(_)) => Err(FeatureError::AxisForbidden(name)),
    }
}

/// Human-readable label for a 1-based slot number, e.g. `med_x` or `mag`.
pub fn feature_label(index: usize) -> String {
    assert!((1..=FEATURE_COUNT).contains(&index));
    for name in FeatureName::ALL {
        if name.per_axis() {
            for axis in Axis::ALL {
                if name.base() + axis.offset() == index {
                    return format!("{}_{}", name.mnemonic().to_ascii_lowercase(), axis.name());
                }
            }
        } else if name.base() == index {
            return name.mnemonic().to_ascii_lowercase();
        }
    }
    unreachable!("all 48 slots are covered");
}

/// The fixed-order 48-slot feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector48(pub [f64; FEATURE_COUNT]);

impl Serialize for FeatureVector48 {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for FeatureVector48 {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        let array: [f64; FEATURE_COUNT] = values.try_into().map_err(|v: Vec<f64>| {
            serde::de::Error::invalid_length(v.len(), &"exactly 48 feature values")
        })?;
        Ok(FeatureVector48(array))
    }
}

impl FeatureVector48 {
    /// Value at a 1-based slot number.
    pub fn table(&self, index: usize) -> f64 {
        assert!((1..=FEATURE_COUNT).contains(&index), "slot out of range");
        self.0[index - 1]
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }
}

/// Per-episode meta-features: the arithmetic mean of the window-level
/// vectors over all windows of the episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaFeatures {
    pub values: FeatureVector48,
    pub window_count: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn histogram_entropy(v: &[f64]) -> f64 {
    const BINS: usize = 16;
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return 0.0;
    }
    let mut counts = [0usize; BINS];
    let scale = BINS as f64 / (hi - lo);
    for &x in v {
        let b = (((x - lo) * scale) as usize).min(BINS - 1);
        counts[b] += 1;
    }
    let n = v.len() as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

fn zero_crossing_rate(v: &[f64]) -> f64 {
    let positive = |x: f64| x >= 0.0;
    let changes = v
        .windows(2)
        .filter(|w| positive(w[0]) != positive(w[1]))
        .count();
    changes as f64 / (v.len() - 1) as f64
}

struct AxisStats {
    amp: f64,
    med: f64,
    mean: f64,
    max: f64,
    min: f64,
    var: f64,
    std: f64,
    rms: f64,
    p2p: f64,
    zcr: f64,
    ent: f64,
    skn: f64,
    krt: f64,
    mad: f64,
}

fn axis_stats(v: &[f64]) -> AxisStats {
    let n = v.len() as f64;
    let mu = mean(v);
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let ss_central: f64 = v.iter().map(|x| (x - mu) * (x - mu)).sum();
    let var = ss_central / (n - 1.0);
    let std = var.sqrt();
    let m3 = v.iter().map(|x| (x - mu).powi(3)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / n;
    let p2p = max - min;
    AxisStats {
        amp: max - mu,
        med: median(v),
        mean: mu,
        max,
        min,
        var,
        std,
        rms: v.iter().map(|x| x * x).sum::<f64>() / n,
        p2p,
        zcr: zero_crossing_rate(v),
        ent: histogram_entropy(v),
        skn: if std > 0.0 {
            m3 / (std * std * std)
        } else {
            0.0
        },
        krt: if std > 0.0 {
            m4 / (std * std * std * std)
        } else {
            0.0
        },
        mad: v.iter().map(|x| (x - mu).abs()).sum::<f64>() / n,
    }
}

/// Computes all 48 features for one window.
pub fn window_features(w: &Window<'_>) -> Result<FeatureVector48, FeatureError> {
    if w.len() < 2 {
        return Err(FeatureError::WindowTooShort(w.len()));
    }
    if w.samples.iter().any(|s| !s.is_finite()) {
        return Err(FeatureError::NonFinite);
    }

    let mut out = [0.0; FEATURE_COUNT];
    for axis in Axis::ALL {
        let v: Vec<f64> = w
            .samples
            .iter()
            .map(|s| match axis {
                Axis::X => s.x,
                Axis::Y => s.y,
                Axis::Z => s.z,
            })
            .collect();
        let st = axis_stats(&v);
        let o = axis.offset();
        let slot = |name: FeatureName| name.base() - 1 + o;
        out[slot(FeatureName::Amp)] = st.amp;
        out[slot(FeatureName::Med)] = st.med;
        out[slot(FeatureName::Mean)] = st.mean;
        out[slot(FeatureName::Max)] = st.max;
        out[slot(FeatureName::Min)] = st.min;
        out[slot(FeatureName::Var)] = st.var;
        out[slot(FeatureName::Std)] = st.std;
        out[slot(FeatureName::Rms)] = st.rms;
        out[slot(FeatureName::P2p)] = st.p2p;
        out[slot(FeatureName::Zcr)] = st.zcr;
        out[slot(FeatureName::Ent)] = st.ent;
        out[slot(FeatureName::Skn)] = st.skn;
        out[slot(FeatureName::Krt)] = st.krt;
        out[slot(FeatureName::Rng)] = st.p2p;
        out[slot(FeatureName::Mad)] = st.mad;
    }

    let mags: Vec<f64> = w.samples.iter().map(|s| s.magnitude()).collect();
    out[FeatureName::Mag.base() - 1] = mean(&mags);
    out[FeatureName::Eng.base() - 1] = mags.iter().map(|m| m * m).sum();
    out[FeatureName::Ang.base() - 1] = w
        .samples
        .iter()
        .map(|s| s.z.atan2((s.x * s.x + s.y * s.y).sqrt()))
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(FeatureVector48(out))
}

/// Meta-features for an episode: window 48-vectors averaged slot-wise over
/// the sliding windows. Training path; episodes shorter than the window
/// propagate [`SignalError::EpisodeTooShort`].
pub fn episode_meta_features(
    ep: &Episode,
    window_len: usize,
    overlap: f64,
) -> Result<MetaFeatures, FeatureError> {
    let windows = sliding_windows(ep, window_len, overlap)?;
    meta_over_windows(&windows)
}

/// Meta-features with the inference fallback: an episode shorter than the
/// window is treated as a single window covering the whole episode.
pub fn episode_meta_features_lenient(
    ep: &Episode,
    window_len: usize,
    overlap: f64,
) -> Result<MetaFeatures, FeatureError> {
    match sliding_windows(ep, window_len, overlap) {
        Ok(windows) => meta_over_windows(&windows),
        Err(SignalError::EpisodeTooShort { .. }) => {
            meta_over_windows(&[crate::signal::whole_episode_window(ep)])
        }
        Err(e) => Err(e.into()),
    }
}

fn meta_over_windows(windows: &[Window<'_>]) -> Result<MetaFeatures, FeatureError> {
    let mut acc = [0.0; FEATURE_COUNT];
    for w in windows {
        let f = window_features(w)?;
        for (a, v) in acc.iter_mut().zip(f.0.iter()) {
            *a += v;
        }
    }
    let n = windows.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(MetaFeatures {
        values: FeatureVector48(acc),
        window_count: windows.len(),
    })
}

/// A feature-matrix row: one episode's meta-features plus identifying
/// metadata, as exported to CSV.
#[derive(Debug, Clone)]
pub struct FeatureRow {
    pub values: FeatureVector48,
    pub label: String,
    pub subject_id: String,
    pub location: String,
}

/// Writes a feature matrix as CSV with columns
/// `f1..f48,label,subject_id,location`.
pub fn write_feature_matrix_csv<W: Write>(mut w: W, rows: &[FeatureRow]) -> std::io::Result<()> {
    let header: Vec<String> = (1..=FEATURE_COUNT)
        .map(|i| format!("f{i}"))
        .chain(["label".into(), "subject_id".into(), "location".into()])
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let mut fields: Vec<String> = row.values.0.iter().map(|v| format!("{v}")).collect();
        fields.push(row.label.clone());
        fields.push(row.subject_id.clone());
        fields.push(row.location.clone());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{AccelSample, PostureLabel, SensorLocation};
    use approx::assert_abs_diff_eq;

    fn episode(samples: Vec<AccelSample>) -> Episode {
        Episode {
            samples,
            sample_rate_hz: 30.0,
            subject_id: "s1".into(),
            location: SensorLocation::Chest,
            label: PostureLabel::Supine,
            provenance: "test".into(),
        }
    }

    fn features_of(samples: Vec<AccelSample>) -> FeatureVector48 {
        let ep = episode(samples);
        let w = crate::signal::whole_episode_window(&ep);
        window_features(&w).unwrap()
    }

    fn idx(name: FeatureName, axis: Option<Axis>) -> usize {
        feature_index(name, axis).unwrap()
    }

    #[test]
    fn constant_window_features() {
        let f = features_of(vec![AccelSample::new(1.0, 0.0, 0.0); 8]);
        assert_eq!(f.table(idx(FeatureName::Mean, Some(Axis::X))), 1.0);
        assert_eq!(f.table(idx(FeatureName::Var, Some(Axis::X))), 0.0);
        assert_eq!(f.table(idx(FeatureName::Amp, Some(Axis::X))), 0.0);
        assert_eq!(f.table(idx(FeatureName::P2p, Some(Axis::X))), 0.0);
        assert_eq!(f.table(idx(FeatureName::Rng, Some(Axis::X))), 0.0);
        assert_eq!(f.table(idx(FeatureName::Mag, None)), 1.0);
        assert_eq!(f.table(idx(FeatureName::Skn, Some(Axis::X))), 0.0);
        assert_eq!(f.table(idx(FeatureName::Zcr, Some(Axis::X))), 0.0);
        assert_eq!(f.table(idx(FeatureName::Ent, Some(Axis::X))), 0.0);
    }

    #[test]
    fn alternating_signal_features() {
        let samples = [1.0, -1.0, 1.0, -1.0]
            .iter()
            .map(|&x| AccelSample::new(x, 0.0, 0.0))
            .collect();
        let f = features_of(samples);
        assert_eq!(f.table(idx(FeatureName::Mean, Some(Axis::X))), 0.0);
        assert_abs_diff_eq!(
            f.table(idx(FeatureName::Std, Some(Axis::X))),
            (4.0f64 / 3.0).sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(f.table(idx(FeatureName::Rms, Some(Axis::X))), 1.0);
        assert_eq!(f.table(idx(FeatureName::P2p, Some(Axis::X))), 2.0);
        assert_eq!(f.table(idx(FeatureName::Zcr, Some(Axis::X))), 1.0);
    }

    #[test]
    fn three_four_five_magnitude() {
        let f = features_of(vec![AccelSample::new(3.0, 4.0, 0.0); 4]);
        assert_eq!(f.table(idx(FeatureName::Mag, None)), 5.0);
    }

    #[test]
    fn p2p_and_rng_bit_equal() {
        let samples = (0..37)
            .map(|i| {
                AccelSample::new(
                    (i as f64 * 0.37).sin(),
                    (i as f64 * 0.11).cos() * 2.0,
                    1.0 - i as f64 * 0.01,
                )
            })
            .collect();
        let f = features_of(samples);
        for axis in Axis::ALL {
            let p2p = f.table(idx(FeatureName::P2p, Some(axis)));
            let rng = f.table(idx(FeatureName::Rng, Some(axis)));
            assert_eq!(p2p.to_bits(), rng.to_bits());
        }
    }

    #[test]
    fn index_mapping_matches_table() {
        assert_eq!(idx(FeatureName::Med, Some(Axis::X)), 4);
        assert_eq!(idx(FeatureName::Mag, None), 40);
        assert_eq!(idx(FeatureName::Ang, None), 45);
        assert_eq!(idx(FeatureName::Mad, Some(Axis::Z)), 48);
        assert!(matches!(
            feature_index(FeatureName::Ang, Some(Axis::X)),
            Err(FeatureError::AxisForbidden(FeatureName::Ang))
        ));
        assert!(matches!(
            feature_index(FeatureName::Med, None),
            Err(FeatureError::AxisRequired(FeatureName::Med))
        ));
        // Bijectivity over the 48 slots.
        let mut seen = [false; FEATURE_COUNT];
        for name in FeatureName::ALL {
            if name.per_axis() {
                for axis in Axis::ALL {
                    seen[idx(name, Some(axis)) - 1] = true;
                }
            } else {
                seen[idx(name, None) - 1] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn window_too_short_and_nonfinite_errors() {
        let ep1 = episode(vec![AccelSample::new(0.0, 0.0, 1.0)]);
        let w1 = crate::signal::whole_episode_window(&ep1);
        assert!(matches!(
            window_features(&w1),
            Err(FeatureError::WindowTooShort(1))
        ));
        let ep2 = episode(vec![
            AccelSample::new(0.0, 0.0, 1.0),
            AccelSample::new(f64::INFINITY, 0.0, 1.0),
        ]);
        let w2 = crate::signal::whole_episode_window(&ep2);
        assert!(matches!(window_features(&w2), Err(FeatureError::NonFinite)));
    }

    #[test]
    fn meta_features_average_windows() {
        // 144 samples, window 96, overlap 0.5 -> exactly two windows.
        let samples: Vec<AccelSample> = (0..144)
            .map(|i| AccelSample::new(if i < 96 { 1.0 } else { 3.0 }, 0.0, 1.0))
            .collect();
        let ep = episode(samples);
        let meta = episode_meta_features(&ep, 96, 0.5).unwrap();
        assert_eq!(meta.window_count, 2);
        // Window means on x: 1.0 and (48*1 + 48*3)/96 = 2.0 -> meta 1.5.
        assert_abs_diff_eq!(
            meta.values.table(idx(FeatureName::Mean, Some(Axis::X))),
            1.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn one_window_meta_equals_window_features() {
        let samples: Vec<AccelSample> = (0..96)
            .map(|i| AccelSample::new((i as f64 * 0.2).sin(), 0.1, 0.97))
            .collect();
        let ep = episode(samples);
        let meta = episode_meta_features(&ep, 96, 0.5).unwrap();
        let w = crate::signal::whole_episode_window(&ep);
        let direct = window_features(&w).unwrap();
        assert_eq!(meta.window_count, 1);
        assert_eq!(meta.values.0, direct.0);
    }

    #[test]
    fn lenient_path_falls_back_to_single_window() {
        let samples: Vec<AccelSample> = (0..40)
            .map(|i| AccelSample::new(i as f64 * 0.01, 0.0, 1.0))
            .collect();
        let ep = episode(samples);
        assert!(episode_meta_features(&ep, 96, 0.5).is_err());
        let meta = episode_meta_features_lenient(&ep, 96, 0.5).unwrap();
        assert_eq!(meta.window_count, 1);
    }

    #[test]
    fn feature_labels_cover_slots() {
        assert_eq!(feature_label(4), "med_x");
        assert_eq!(feature_label(40), "mag");
        assert_eq!(feature_label(48), "mad_z");
    }
}

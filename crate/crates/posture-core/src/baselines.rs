//! Linear comparison models: LDA and a linear SVM, both on per-axis
//! episode means.
//!
//! These reproduce the competing single-accelerometer approaches: a linear
//! discriminant on the mean of each axis and a one-vs-rest linear-kernel
//! SVM on the same three values. Both consume exactly [`MeanFeature3`],
//! never the 48-slot window features.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{Episode, PostureLabel};
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("episode has no samples")]
    EmptyEpisode,
    #[error("need at least two classes with at least one sample each; got {0}")]
    UnknownClassCount(usize),
    #[error("pooled covariance is singular; enable the ridge or add data")]
    SingularCovariance,
    #[error("feature rows and labels differ in length: {rows} vs {labels}")]
    DimensionMismatch { rows: usize, labels: usize },
    #[error("model (de)serialization failed: {0}")]
    Persist(#[from] serde_json::Error),
}

/// Whole-episode mean of each acceleration axis, in gravity units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFeature3 {
    pub mean_x: f64,
    pub mean_y: f64,
    pub mean_z: f64,
}

impl MeanFeature3 {
    pub fn as_array(&self) -> [f64; 3] {
        [self.mean_x, self.mean_y, self.mean_z]
    }
}

/// Arithmetic mean per axis over the whole episode.
pub fn mean_features(ep: &Episode) -> Result<MeanFeature3, BaselineError> {
    if ep.is_empty() {
        return Err(BaselineError::EmptyEpisode);
    }
    let n = ep.len() as f64;
    let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
    for s in &ep.samples {
        sx += s.x;
        sy += s.y;
        sz += s.z;
    }
    Ok(MeanFeature3 {
        mean_x: sx / n,
        mean_y: sy / n,
        mean_z: sz / n,
    })
}

fn class_indices(
    labels: &[PostureLabel],
    label_set: &[PostureLabel],
) -> Result<Vec<usize>, BaselineError> {
    labels
        .iter()
        .map(|l| {
            label_set
                .iter()
                .position(|s| s == l)
                .ok_or(BaselineError::UnknownClassCount(0))
        })
        .collect()
}

// --- LDA -----------------------------------------------------------------

/// Gaussian linear discriminant with a pooled covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaModel {
    pub schema_version: u32,
    pub label_set: Vec<PostureLabel>,
    pub class_means: Vec<[f64; 3]>,
    pub pooled_covariance: [[f64; 3]; 3],
    pub priors: Vec<f64>,
    inv_covariance: [[f64; 3]; 3],
}

fn mat_vec(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[allow(clippy::needless_range_loop)]
fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .powi(3);
    if det.abs() <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((i + 1) % 3, (i + 2) % 3);
            let (c, d) = ((j + 1) % 3, (j + 2) % 3);
            // Cofactor transpose (adjugate).
            out[j][i] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) * inv_det;
        }
    }
    Some(out)
}

impl LdaModel {
    /// Fits class means, priors, and the pooled (N-K denominator)
    /// covariance. `ridge` adds `1e-6 * trace / 3` to the diagonal, which
    /// keeps constant-axis synthetic data invertible.
    #[allow(clippy::needless_range_loop)]
    pub fn fit(
        rows: &[MeanFeature3],
        labels: &[PostureLabel],
        label_set: &[PostureLabel],
        ridge: bool,
    ) -> Result<Self, BaselineError> {
        if rows.len() != labels.len() {
            return Err(BaselineError::DimensionMismatch {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        let y = class_indices(labels, label_set)?;
        let k = label_set.len();
        let n = rows.len();
        let mut counts = vec![0usize; k];
        let mut means = vec![[0.0f64; 3]; k];
        for (row, &cls) in rows.iter().zip(&y) {
            counts[cls] += 1;
            let v = row.as_array();
            for d in 0..3 {
                means[cls][d] += v[d];
            }
        }
        let present = counts.iter().filter(|&&c| c > 0).count();
        if present < 2 || counts.contains(&0) {
            return Err(BaselineError::UnknownClassCount(present));
        }
        for (mean, &c) in means.iter_mut().zip(&counts) {
            for d in 0..3 {
                mean[d] /= c as f64;
            }
        }

        let mut cov = [[0.0f64; 3]; 3];
        for (row, &cls) in rows.iter().zip(&y) {
            let v = row.as_array();
            let d = [
                v[0] - means[cls][0],
                v[1] - means[cls][1],
                v[2] - means[cls][2],
            ];
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += d[i] * d[j];
                }
            }
        }
        if n <= k {
            return Err(BaselineError::SingularCovariance);
        }
        let denom = (n - k) as f64;
        for r in cov.iter_mut() {
            for v in r.iter_mut() {
                *v /= denom;
            }
        }
        if ridge {
            let tr = cov[0][0] + cov[1][1] + cov[2][2];
            let eps = 1e-6 * tr / 3.0;
            for d in 0..3 {
                cov[d][d] += eps;
            }
        }
        let inv = invert3(&cov).ok_or(BaselineError::SingularCovariance)?;
        Ok(LdaModel {
            schema_version: SCHEMA_VERSION,
            label_set: label_set.to_vec(),
            class_means: means,
            pooled_covariance: cov,
            priors: counts.iter().map(|&c| c as f64 / n as f64).collect(),
            inv_covariance: inv,
        })
    }

    /// Linear discriminant score for each class.
    pub fn decision_values(&self, x: &MeanFeature3) -> Vec<f64> {
        let xv = x.as_array();
        self.class_means
            .iter()
            .zip(&self.priors)
            .map(|(mu, &pi)| {
                let a = mat_vec(&self.inv_covariance, mu);
                dot3(&a, &xv) - 0.5 * dot3(&a, mu) + pi.ln()
            })
            .collect()
    }

    pub fn predict(&self, x: &MeanFeature3) -> PostureLabel {
        let scores = self.decision_values(x);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        self.label_set[best]
    }
}

// --- Linear SVM ----------------------------------------------------------

/// One-vs-rest linear-kernel SVM trained by a deterministic
/// maximal-violating-pair dual coordinate method. The bias is
/// unregularized, so rescaling inputs by `c` with `C / c^2` reproduces the
/// same decision rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub schema_version: u32,
    pub label_set: Vec<PostureLabel>,
    pub c: f64,
    pub weights: Vec<[f64; 3]>,
    pub biases: Vec<f64>,
    /// Per-class solver convergence within the iteration budget.
    pub converged: Vec<bool>,
}

pub const SVM_TOLERANCE: f64 = 1e-6;
pub const SVM_MAX_EPOCHS: usize = 10_000;

struct BinarySvm {
    w: [f64; 3],
    b: f64,
    converged: bool,
}

/// Solves one binary C-SVC dual with the maximal-violating-pair rule.
/// Deterministic: ties in pair selection go to the lower index.
fn solve_binary(x: &[[f64; 3]], y: &[f64], c: f64) -> BinarySvm {
    let n = x.len();
    let mut alpha = vec![0.0f64; n];
    let mut w = [0.0f64; 3];
    let max_iter = SVM_MAX_EPOCHS.saturating_mul(n);
    let mut converged = false;

    for _ in 0..max_iter {
        // -y_t * grad_t = y_t - w.x_t; candidate bias from each point.
        let mut m_up = f64::NEG_INFINITY;
        let mut m_low = f64::INFINITY;
        let mut i_up = usize::MAX;
        let mut i_low = usize::MAX;
        for t in 0..n {
            let g = y[t] - dot3(&w, &x[t]);
            let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (y[t] < 0.0 && alpha[t] < c) || (y[t] > 0.0 && alpha[t] > 0.0);
            if in_up && g > m_up {
                m_up = g;
                i_up = t;
            }
            if in_low && g < m_low {
                m_low = g;
                i_low = t;
            }
        }
        if i_up == usize::MAX || i_low == usize::MAX || m_up - m_low <= SVM_TOLERANCE {
            converged = true;
            break;
        }

        let (i, j) = (i_up, i_low);
        let diff = [x[i][0] - x[j][0], x[i][1] - x[j][1], x[i][2] - x[j][2]];
        let quad = dot3(&diff, &diff).max(1e-12);
        // Step along the equality-preserving direction d_i = y_i, d_j = -y_j.
        let mut t_step = (m_up - m_low) / quad;
        let room_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let room_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        t_step = t_step.min(room_i).min(room_j);
        if t_step <= 0.0 {
            converged = true;
            break;
        }
        alpha[i] += y[i] * t_step;
        alpha[j] -= y[j] * t_step;
        for d in 0..3 {
            w[d] += t_step * diff[d];
        }
    }

    // Bias from the KKT interval midpoint.
    let mut m_up = f64::NEG_INFINITY;
    let mut m_low = f64::INFINITY;
    for t in 0..n {
        let g = y[t] - dot3(&w, &x[t]);
        let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
        let in_low = (y[t] < 0.0 && alpha[t] < c) || (y[t] > 0.0 && alpha[t] > 0.0);
        if in_up {
            m_up = m_up.max(g);
        }
        if in_low {
            m_low = m_low.min(g);
        }
    }
    let b = if m_up.is_finite() && m_low.is_finite() {
        0.5 * (m_up + m_low)
    } else if m_up.is_finite() {
        m_up
    } else {
        m_low
    };
    BinarySvm { w, b, converged }
}

impl LinearSvmModel {
    pub fn fit(
        rows: &[MeanFeature3],
        labels: &[PostureLabel],
        label_set: &[PostureLabel],
        c: f64,
    ) -> Result<Self, BaselineError> {
        if rows.len() != labels.len() {
            return Err(BaselineError::DimensionMismatch {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        let y = class_indices(labels, label_set)?;
        let mut counts = vec![0usize; label_set.len()];
        for &cls in &y {
            counts[cls] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count();
        if present < 2 || counts.contains(&0) {
            return Err(BaselineError::UnknownClassCount(present));
        }

        let x: Vec<[f64; 3]> = rows.iter().map(|r| r.as_array()).collect();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut converged = Vec::new();
        for cls in 0..label_set.len() {
            let target: Vec<f64> = y
                .iter()
                .map(|&t| if t == cls { 1.0 } else { -1.0 })
                .collect();
            let solved = solve_binary(&x, &target, c);
            weights.push(solved.w);
            biases.push(solved.b);
            converged.push(solved.converged);
        }
        Ok(LinearSvmModel {
            schema_version: SCHEMA_VERSION,
            label_set: label_set.to_vec(),
            c,
            weights,
            biases,
            converged,
        })
    }

    pub fn decision_values(&self, x: &MeanFeature3) -> Vec<f64> {
        let xv = x.as_array();
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot3(w, &xv) + b)
            .collect()
    }

    pub fn predict(&self, x: &MeanFeature3) -> PostureLabel {
        let scores = self.decision_values(x);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        self.label_set[best]
    }
}

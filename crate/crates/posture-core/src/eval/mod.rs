//! Evaluation machinery: fold splitters, confusion matrices, macro metrics,
//! coefficient of variation, and the Kruskal–Wallis rank test.
//!
//! Metric definitions (macro averages over the `l` classes):
//!
//! * accuracy      = mean_i (TP_i + TN_i) / (TP_i + TN_i + FP_i + FN_i)
//! * balanced acc. = (sum_i TP_i/P_i + sum_i TN_i/N_i) / (2 l)
//! * precision     = mean_i TP_i / (TP_i + FP_i)
//! * recall        = mean_i TP_i / (TP_i + FN_i)
//! * F1            = 2 P R / (P + R)
//!
//! Zero-denominator class terms contribute 0 while the class still counts
//! in `l`, so folds missing a class stay comparable.

pub mod experiment;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::signal::{Episode, PostureLabel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{episodes} episodes cannot fill {k} folds")]
    TooFewEpisodes { episodes: usize, k: usize },
    #[error("fold count {0} is invalid; need k >= 2")]
    InvalidFoldCount(usize),
    #[error("leave-one-subject-out needs at least two subjects")]
    SingleSubject,
    #[error("label lists differ in length: {actual} vs {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("label {0} is not in the declared label set")]
    UnknownLabel(PostureLabel),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("values are empty")]
    EmptyValues,
    #[error("coefficient of variation is undefined for zero mean")]
    ZeroMean,
    #[error("kruskal-wallis needs >= 2 non-empty groups and >= 3 values total")]
    InvalidGroups,
}

/// One train/test split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fold {
    /// Fold number for k-fold; held-out subject id for LOSO.
    pub id: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Label-stratified k-fold split over episode indices, deterministic in the
/// seed. Folds are disjoint and cover the dataset.
pub fn kfold_split(episodes: &[Episode], k: usize, rng_seed: u64) -> Result<Vec<Fold>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFoldCount(k));
    }
    if episodes.len() < k {
        return Err(EvalError::TooFewEpisodes {
            episodes: episodes.len(),
            k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut labels: Vec<PostureLabel> = episodes.iter().map(|e| e.label).collect();
    labels.sort();
    labels.dedup();

    let mut fold_test: Vec<Vec<usize>> = vec![Vec::new(); k];
    for label in labels {
        let mut idx: Vec<usize> = episodes
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == label)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_test[pos % k].push(i);
        }
    }

    Ok((0..k)
        .map(|f| {
            let test = {
                let mut t = fold_test[f].clone();
                t.sort_unstable();
                t
            };
            let train = (0..episodes.len()).filter(|i| !test.contains(i)).collect();
            Fold {
                id: format!("fold{f}"),
                train,
                test,
            }
        })
        .collect())
}

/// Leave-one-subject-out split: one fold per distinct subject, holding out
/// every episode of that subject.
pub fn loso_split(episodes: &[Episode]) -> Result<Vec<Fold>, EvalError> {
    let mut subjects: Vec<&str> = episodes.iter().map(|e| e.subject_id.as_str()).collect();
    subjects.sort_unstable();
    subjects.dedup();
    if subjects.len() < 2 {
        return Err(EvalError::SingleSubject);
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..episodes.len()).partition(|&i| episodes[i].subject_id == s);
            Fold {
                id: s.to_string(),
                train,
                test,
            }
        })
        .collect())
}

/// K x K confusion counts; rows = actual, columns = predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub label_set: Vec<PostureLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(label_set: &[PostureLabel]) -> Self {
        let k = label_set.len();
        Self {
            label_set: label_set.to_vec(),
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_pairs(
        actual: &[PostureLabel],
        predicted: &[PostureLabel],
        label_set: &[PostureLabel],
    ) -> Result<Self, EvalError> {
        if actual.len() != predicted.len() {
            return Err(EvalError::LengthMismatch {
                actual: actual.len(),
                predicted: predicted.len(),
            });
        }
        let mut cm = Self::new(label_set);
        for (a, p) in actual.iter().zip(predicted) {
            cm.add(*a, *p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, actual: PostureLabel, predicted: PostureLabel) -> Result<(), EvalError> {
        let a = self.index_of(actual)?;
        let p = self.index_of(predicted)?;
        self.counts[a][p] += 1;
        Ok(())
    }

    fn index_of(&self, label: PostureLabel) -> Result<usize, EvalError> {
        self.label_set
            .iter()
            .position(|l| *l == label)
            .ok_or(EvalError::UnknownLabel(label))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Element-wise sum with another matrix over the same label set.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.label_set, other.label_set);
        for (r, or) in self.counts.iter_mut().zip(&other.counts) {
            for (c, oc) in r.iter_mut().zip(or) {
                *c += oc;
            }
        }
    }
}

/// The macro metric bundle computed from one confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Computes the metric bundle. Zero-denominator class terms contribute 0
/// to their macro sum while the class still counts in `l`.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricSet, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let l = cm.label_set.len();
    let total_f = total as f64;

    let mut acc_sum = 0.0;
    let mut tpr_sum = 0.0;
    let mut tnr_sum = 0.0;
    let mut prec_sum = 0.0;
    let mut rec_sum = 0.0;
    for i in 0..l {
        let tp = cm.counts[i][i];
        let row: u64 = cm.counts[i].iter().sum();
        let col: u64 = cm.counts.iter().map(|r| r[i]).sum();
        let fn_ = row - tp;
        let fp = col - tp;
        let tn = total - tp - fp - fn_;
        let p = tp + fn_;
        let n = total - p;

        acc_sum += (tp + tn) as f64 / total_f;
        if p > 0 {
            tpr_sum += tp as f64 / p as f64;
        }
        if n > 0 {
            tnr_sum += tn as f64 / n as f64;
        }
        if tp + fp > 0 {
            prec_sum += tp as f64 / (tp + fp) as f64;
        }
        if p > 0 {
            rec_sum += tp as f64 / p as f64;
        }
    }

    let precision = prec_sum / l as f64;
    let recall = rec_sum / l as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricSet {
        accuracy: acc_sum / l as f64,
        balanced_accuracy: (tpr_sum + tnr_sum) / (2.0 * l as f64),
        precision,
        recall,
        f1,
    })
}

/// Coefficient of variation: sample standard deviation (N-1 denominator)
/// over the mean. A single value has zero deviation by convention.
pub fn cov(values: &[f64]) -> Result<f64, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyValues);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        return Err(EvalError::ZeroMean);
    }
    if values.len() == 1 {
        return Ok(0.0);
    }
    let var =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
    Ok(var.sqrt() / mean)
}

/// Kruskal–Wallis result. `degenerate` flags the all-values-identical case
/// where H = 0 and p = 1 by convention.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KruskalResult {
    pub h: f64,
    pub p_value: f64,
    pub degenerate: bool,
}

/// Kruskal–Wallis rank test with tie correction; the p-value comes from the
/// chi-square upper tail with `groups - 1` degrees of freedom.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalResult, EvalError> {
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    if groups.len() < 2 || groups.iter().any(|g| g.is_empty()) || n_total < 3 {
        return Err(EvalError::InvalidGroups);
    }

    let first = groups[0][0];
    if groups.iter().flatten().all(|&v| v == first) {
        return Ok(KruskalResult {
            h: 0.0,
            p_value: 1.0,
            degenerate: true,
        });
    }

    // Pool values, tagging each with its group.
    let mut pooled: Vec<(f64, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, vs)| vs.iter().map(move |&v| (v, g)))
        .collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));

    // Average ranks within tie runs; accumulate the tie correction.
    let mut rank_sums = vec![0.0f64; groups.len()];
    let mut tie_term = 0.0f64;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        let avg_rank = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &(_, g) in &pooled[i..=j] {
            rank_sums[g] += avg_rank;
        }
        tie_term += t * t * t - t;
        i = j + 1;
    }

    let n = n_total as f64;
    let mut h = groups
        .iter()
        .zip(&rank_sums)
        .map(|(g, &r)| r * r / g.len() as f64)
        .sum::<f64>()
        * 12.0
        / (n * (n + 1.0))
        - 3.0 * (n + 1.0);
    let correction = 1.0 - tie_term / (n * n * n - n);
    h /= correction;

    let df = (groups.len() - 1) as f64;
    let chi = ChiSquared::new(df).expect("df >= 1");
    let p_value = chi.sf(h.max(0.0));
    Ok(KruskalResult {
        h,
        p_value,
        degenerate: false,
    })
}

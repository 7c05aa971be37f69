//! The experiment runner: per-fold prepare/fit/predict pipelines for every
//! model family, with aggregated reports.
//!
//! Leakage discipline: the feature-pipeline window size is the minimum
//! episode length of the *training* fold only, and normalization is
//! strictly per-episode (each episode's scale comes from its own samples).
//! Every fold records which episodes fed each statistic in a
//! [`FoldAudit`], so tests can assert zero training/test leakage.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adalstm::{AdaLstmModel, LrSchedule, LstmError, TrainConfig};
use crate::baselines::{mean_features, BaselineError, LdaModel, LinearSvmModel};
use crate::ensemble::{BaggedEnsemble, EnsembleError, EnsembleParams};
use crate::features::{
    episode_meta_features, episode_meta_features_lenient, FeatureError, FeatureVector48,
};
use crate::seeds;
use crate::signal::{normalize_episode, Dataset, Episode, PostureLabel, SignalError};
use crate::SCHEMA_VERSION;

use super::{
    compute_metrics, cov, kfold_split, loso_split, ConfusionMatrix, EvalError, Fold, MetricSet,
};

/// Window overlap of the sliding-window feature pipeline (50%).
pub const WINDOW_OVERLAP: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Which model family an experiment evaluates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelSpec {
    /// Bagged decision trees on 48 meta-features.
    #[serde(rename = "et")]
    EnsembleTree {
        #[serde(default)]
        params: EnsembleParams,
    },
    /// Bi-LSTM with the decaying learning-rate schedule.
    #[serde(rename = "adalstm")]
    AdaLstm {
        #[serde(default)]
        config: TrainConfig,
    },
    /// The same network with a fixed learning rate.
    #[serde(rename = "lstm")]
    LstmFixed {
        #[serde(default)]
        config: TrainConfig,
    },
    /// Linear discriminant on per-axis means.
    #[serde(rename = "lda")]
    Lda,
    /// One-vs-rest linear SVM on per-axis means.
    #[serde(rename = "svm")]
    Svm { c: f64 },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::EnsembleTree { .. } => "et",
            ModelSpec::AdaLstm { .. } => "adalstm",
            ModelSpec::LstmFixed { .. } => "lstm",
            ModelSpec::Lda => "lda",
            ModelSpec::Svm { .. } => "svm",
        }
    }

    pub fn parse(name: &str) -> Option<ModelSpec> {
        match name {
            "et" => Some(ModelSpec::EnsembleTree {
                params: EnsembleParams::default(),
            }),
            "adalstm" => Some(ModelSpec::AdaLstm {
                config: TrainConfig::default(),
            }),
            "lstm" => Some(ModelSpec::LstmFixed {
                config: TrainConfig::fixed_lr(),
            }),
            "lda" => Some(ModelSpec::Lda),
            "svm" => Some(ModelSpec::Svm { c: 1.0 }),
            _ => None,
        }
    }
}

/// Cross-validation scheme.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "split", rename_all = "snake_case")]
pub enum SplitSpec {
    Kfold { k: usize },
    Loso,
}

impl SplitSpec {
    pub fn name(&self) -> String {
        match self {
            SplitSpec::Kfold { k } => format!("kfold{k}"),
            SplitSpec::Loso => "loso".to_string(),
        }
    }
}

/// Instrumentation record: which episode indices fed each cross-episode
/// statistic in one fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldAudit {
    /// Window size chosen for the feature pipeline, when the model uses
    /// windows.
    pub window_len: Option<usize>,
    /// Episodes whose lengths the window size was derived from.
    pub window_len_sources: Vec<usize>,
    /// For every episode touched, the episodes whose samples fed its
    /// normalization scale. Per-episode normalization means each list is
    /// exactly the episode itself.
    pub normalization_sources: Vec<(usize, Vec<usize>)>,
}

/// One fold's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_id: String,
    pub test_indices: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
    pub audit: FoldAudit,
    pub warnings: Vec<String>,
}

/// Per-metric mean and sample standard deviation over folds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: MetricSet,
    pub std: MetricSet,
}

/// Full experiment outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub model: String,
    pub split: String,
    pub seed: u64,
    pub label_set: Vec<PostureLabel>,
    pub folds: Vec<FoldResult>,
    pub summary: MetricSummary,
    /// Coefficient of variation of the per-fold F1 scores; `None` when the
    /// mean F1 is zero.
    pub cov_f1: Option<f64>,
    pub aggregate_confusion: ConfusionMatrix,
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct PreparedFold {
    train: Vec<Episode>,
    test: Vec<Episode>,
    audit: FoldAudit,
}

fn prepare_fold(ds: &Dataset, fold: &Fold) -> Result<PreparedFold, ExperimentError> {
    let mut normalization_sources = Vec::new();
    let mut normalize_set = |idxs: &[usize]| -> Result<Vec<Episode>, ExperimentError> {
        idxs.iter()
            .map(|&i| {
                normalization_sources.push((i, vec![i]));
                Ok(normalize_episode(&ds.episodes[i])?)
            })
            .collect()
    };
    let train = normalize_set(&fold.train)?;
    let test = normalize_set(&fold.test)?;
    Ok(PreparedFold {
        train,
        test,
        audit: FoldAudit {
            window_len: None,
            window_len_sources: Vec::new(),
            normalization_sources,
        },
    })
}

fn run_fold(
    ds: &Dataset,
    fold: &Fold,
    spec: &ModelSpec,
    fold_seed: u64,
) -> Result<FoldResult, ExperimentError> {
    let mut prepared = prepare_fold(ds, fold)?;
    let label_set = &ds.label_set;
    let mut warnings = Vec::new();

    let predicted: Vec<PostureLabel> = match spec {
        ModelSpec::EnsembleTree { params } => {
            let window_len = prepared
                .train
                .iter()
                .map(|e| e.len())
                .min()
                .ok_or(SignalError::EmptyDataset)?;
            prepared.audit.window_len = Some(window_len);
            prepared.audit.window_len_sources = fold.train.clone();

            let rows: Vec<FeatureVector48> = prepared
                .train
                .iter()
                .map(|e| Ok(episode_meta_features(e, window_len, WINDOW_OVERLAP)?.values))
                .collect::<Result<_, ExperimentError>>()?;
            let labels: Vec<PostureLabel> = prepared.train.iter().map(|e| e.label).collect();
            let model = BaggedEnsemble::fit(&rows, &labels, label_set, params, fold_seed)?;
            prepared
                .test
                .iter()
                .map(|e| {
                    let f = episode_meta_features_lenient(e, window_len, WINDOW_OVERLAP)?;
                    Ok(model.predict(&f.values)?)
                })
                .collect::<Result<_, ExperimentError>>()?
        }
        ModelSpec::AdaLstm { config } | ModelSpec::LstmFixed { config } => {
            let mut config = config.clone();
            if matches!(spec, ModelSpec::LstmFixed { .. }) {
                config.schedule = LrSchedule::Fixed;
            }
            let mut model = AdaLstmModel::with_defaults(label_set, config);
            let report = model.train(&prepared.train, fold_seed)?;
            warnings.extend(report.warnings);
            prepared
                .test
                .iter()
                .map(|e| Ok(model.predict(e)?))
                .collect::<Result<_, ExperimentError>>()?
        }
        ModelSpec::Lda => {
            let rows: Vec<_> = prepared
                .train
                .iter()
                .map(mean_features)
                .collect::<Result<_, _>>()?;
            let labels: Vec<PostureLabel> = prepared.train.iter().map(|e| e.label).collect();
            let model = LdaModel::fit(&rows, &labels, label_set, true)?;
            prepared
                .test
                .iter()
                .map(|e| Ok(model.predict(&mean_features(e)?)))
                .collect::<Result<_, ExperimentError>>()?
        }
        ModelSpec::Svm { c } => {
            let rows: Vec<_> = prepared
                .train
                .iter()
                .map(mean_features)
                .collect::<Result<_, _>>()?;
            let labels: Vec<PostureLabel> = prepared.train.iter().map(|e| e.label).collect();
            let model = LinearSvmModel::fit(&rows, &labels, label_set, *c)?;
            if model.converged.iter().any(|&conv| !conv) {
                warnings.push("svm did not converge within the iteration budget".into());
            }
            prepared
                .test
                .iter()
                .map(|e| Ok(model.predict(&mean_features(e)?)))
                .collect::<Result<_, ExperimentError>>()?
        }
    };

    let actual: Vec<PostureLabel> = prepared.test.iter().map(|e| e.label).collect();
    let confusion = ConfusionMatrix::from_pairs(&actual, &predicted, label_set)?;
    let metrics = compute_metrics(&confusion)?;
    Ok(FoldResult {
        fold_id: fold.id.clone(),
        test_indices: fold.test.clone(),
        confusion,
        metrics,
        audit: prepared.audit,
        warnings,
    })
}

/// Runs one full cross-validated experiment. Folds are independent and run
/// in parallel; results merge in fold order, so the report is determined
/// entirely by (dataset, spec, split, seed).
pub fn run_experiment(
    ds: &Dataset,
    spec: &ModelSpec,
    split: &SplitSpec,
    seed: u64,
) -> Result<EvalReport, ExperimentError> {
    let folds = match split {
        SplitSpec::Kfold { k } => kfold_split(&ds.episodes, *k, seeds::derive(seed, 0x5f))?,
        SplitSpec::Loso => loso_split(&ds.episodes)?,
    };

    let results: Vec<FoldResult> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| run_fold(ds, fold, spec, seeds::derive2(seed, 0xf01d, i as u64)))
        .collect::<Result<_, _>>()?;

    let mut aggregate = ConfusionMatrix::new(&ds.label_set);
    for r in &results {
        aggregate.merge(&r.confusion);
    }
    let pick =
        |f: fn(&MetricSet) -> f64| -> Vec<f64> { results.iter().map(|r| f(&r.metrics)).collect() };
    let (acc_m, acc_s) = mean_and_std(&pick(|m| m.accuracy));
    let (bal_m, bal_s) = mean_and_std(&pick(|m| m.balanced_accuracy));
    let (pre_m, pre_s) = mean_and_std(&pick(|m| m.precision));
    let (rec_m, rec_s) = mean_and_std(&pick(|m| m.recall));
    let (f1_m, f1_s) = mean_and_std(&pick(|m| m.f1));
    let f1_values = pick(|m| m.f1);
    let cov_f1 = match cov(&f1_values) {
        Ok(v) => Some(v),
        Err(EvalError::ZeroMean) => None,
        Err(e) => return Err(e.into()),
    };

    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        model: spec.name().to_string(),
        split: split.name(),
        seed,
        label_set: ds.label_set.clone(),
        folds: results,
        summary: MetricSummary {
            mean: MetricSet {
                accuracy: acc_m,
                balanced_accuracy: bal_m,
                precision: pre_m,
                recall: rec_m,
                f1: f1_m,
            },
            std: MetricSet {
                accuracy: acc_s,
                balanced_accuracy: bal_s,
                precision: pre_s,
                recall: rec_s,
                f1: f1_s,
            },
        },
        cov_f1,
        aggregate_confusion: aggregate,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-fold metric rows:
    /// `fold,accuracy,balanced_accuracy,precision,recall,f1`.
    pub fn write_folds_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "fold,accuracy,balanced_accuracy,precision,recall,f1")?;
        for f in &self.folds {
            let m = &f.metrics;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                f.fold_id, m.accuracy, m.balanced_accuracy, m.precision, m.recall, m.f1
            )?;
        }
        Ok(())
    }

    /// One summary row: `location,model,mean_f1,std_f1,cov`.
    pub fn write_summary_csv_row<W: std::io::Write>(
        &self,
        mut w: W,
        location: &str,
    ) -> std::io::Result<()> {
        writeln!(
            w,
            "{},{},{},{},{}",
            location,
            self.model,
            self.summary.mean.f1,
            self.summary.std.f1,
            self.cov_f1.map_or(String::from(""), |v| v.to_string())
        )
    }
}

/// Confusion-matrix grid: header `actual\predicted` then one row per
/// actual label.
pub fn write_confusion_csv<W: std::io::Write>(
    mut w: W,
    cm: &ConfusionMatrix,
) -> std::io::Result<()> {
    let header: Vec<String> = std::iter::once("actual".to_string())
        .chain(cm.label_set.iter().map(|l| l.to_string()))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (label, row) in cm.label_set.iter().zip(&cm.counts) {
        let cells: Vec<String> = std::iter::once(label.to_string())
            .chain(row.iter().map(|c| c.to_string()))
            .collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SensorLocation;
    use crate::synth::{generate_dataset, SynthConfig};

    fn chest_dataset(subjects: usize) -> Dataset {
        generate_dataset(&SynthConfig {
            subjects,
            postures: vec![
                PostureLabel::Supine,
                PostureLabel::Prone,
                PostureLabel::LeftSide,
            ],
            locations: vec![SensorLocation::Chest],
            min_episode_len: 96,
            max_episode_len: 128,
            ..SynthConfig::default()
        })
    }

    #[test]
    fn ensemble_loso_on_separable_data() {
        let ds = chest_dataset(6);
        let spec = ModelSpec::EnsembleTree {
            params: EnsembleParams::default(),
        };
        let report = run_experiment(&ds, &spec, &SplitSpec::Loso, 1).unwrap();
        assert_eq!(report.folds.len(), 6);
        assert!(
            report.summary.mean.f1 >= 0.95,
            "mean F1 {}",
            report.summary.mean.f1
        );
        // Fold partition covers the dataset exactly once.
        let mut seen = vec![false; ds.episodes.len()];
        for f in &report.folds {
            for &i in &f.test_indices {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn window_statistics_come_from_training_folds_only() {
        let ds = chest_dataset(5);
        let spec = ModelSpec::EnsembleTree {
            params: EnsembleParams::default(),
        };
        for split in [SplitSpec::Loso, SplitSpec::Kfold { k: 5 }] {
            let report = run_experiment(&ds, &spec, &split, 3).unwrap();
            for f in &report.folds {
                assert!(f.audit.window_len.is_some());
                for src in &f.audit.window_len_sources {
                    assert!(
                        !f.test_indices.contains(src),
                        "window statistic leaked from test episode {src}"
                    );
                }
                for (ep, sources) in &f.audit.normalization_sources {
                    assert_eq!(sources, &vec![*ep]);
                }
            }
        }
    }

    #[test]
    fn lda_and_svm_run_end_to_end() {
        let ds = chest_dataset(5);
        for spec in [ModelSpec::Lda, ModelSpec::Svm { c: 1.0 }] {
            let report = run_experiment(&ds, &spec, &SplitSpec::Loso, 5).unwrap();
            assert!(
                report.summary.mean.f1 >= 0.9,
                "{} mean F1 {}",
                report.model,
                report.summary.mean.f1
            );
        }
    }

    #[test]
    fn fixed_lr_variant_runs_with_schedule_off() {
        use crate::adalstm::TrainConfig;
        let ds = chest_dataset(4);
        let spec = ModelSpec::LstmFixed {
            config: TrainConfig {
                max_epochs: 5,
                ..TrainConfig::fixed_lr()
            },
        };
        let report = run_experiment(&ds, &spec, &SplitSpec::Kfold { k: 2 }, 8).unwrap();
        assert_eq!(report.model, "lstm");
        assert_eq!(report.folds.len(), 2);
    }

    #[test]
    fn single_fold_report_has_zero_cov() {
        let ds = chest_dataset(4);
        let spec = ModelSpec::Lda;
        let report = run_experiment(&ds, &spec, &SplitSpec::Kfold { k: 2 }, 2).unwrap();
        // Two folds, but check the one-fold degenerate path through cov
        // directly as well.
        assert!(report.cov_f1.is_some());
        let one = cov(&[0.9]).unwrap();
        assert_eq!(one, 0.0);
    }

    #[test]
    fn reports_are_seed_deterministic() {
        let ds = chest_dataset(4);
        let spec = ModelSpec::EnsembleTree {
            params: EnsembleParams::default(),
        };
        let a = run_experiment(&ds, &spec, &SplitSpec::Kfold { k: 4 }, 9).unwrap();
        let b = run_experiment(&ds, &spec, &SplitSpec::Kfold { k: 4 }, 9).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn csv_writers_produce_expected_shapes() {
        let ds = chest_dataset(4);
        let report = run_experiment(&ds, &ModelSpec::Lda, &SplitSpec::Loso, 4).unwrap();
        let mut buf = Vec::new();
        report.write_folds_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.trim().lines().count(), 1 + report.folds.len());
        assert!(text.starts_with("fold,accuracy,balanced_accuracy,precision,recall,f1"));

        let mut buf = Vec::new();
        write_confusion_csv(&mut buf, &report.aggregate_confusion).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.trim().lines().count(), 1 + ds.label_set.len());
    }
}

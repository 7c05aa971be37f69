//! Command implementations: each resolves its inputs, drives the library,
//! and writes deterministic CSV/JSON products into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use posture_core::adalstm::AdaLstmModel;
use posture_core::baselines::{mean_features, LdaModel, LinearSvmModel};
use posture_core::ensemble::BaggedEnsemble;
use posture_core::eval::experiment::{
    run_experiment, write_confusion_csv, EvalReport, ModelSpec, SplitSpec,
};
use posture_core::eval::kruskal_wallis;
use posture_core::features::{
    episode_meta_features, feature_label, write_feature_matrix_csv, FeatureRow, FeatureVector48,
    FEATURE_COUNT,
};
use posture_core::signal::io::{load_dataset, write_dataset};
use posture_core::signal::{
    min_episode_length, normalize_episode, Dataset, Episode, PostureLabel, SensorLocation,
};
use posture_core::synth::{generate_dataset, SynthConfig};

use crate::config::{DatasetSource, Provenance};
use crate::error::CliError;

const FEATURE_WINDOW_OVERLAP: f64 = 0.5;

pub fn parse_postures(list: &str) -> Result<Vec<PostureLabel>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            PostureLabel::parse(s).ok_or_else(|| CliError::Usage(format!("unknown posture {s:?}")))
        })
        .collect()
}

pub fn parse_locations(list: &str) -> Result<Vec<SensorLocation>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            SensorLocation::parse(s)
                .ok_or_else(|| CliError::Usage(format!("unknown sensor location {s:?}")))
        })
        .collect()
}

pub fn parse_split(s: &str) -> Result<SplitSpec, CliError> {
    if s == "loso" {
        return Ok(SplitSpec::Loso);
    }
    if let Some(k) = s.strip_prefix("kfold") {
        let k: usize = k
            .parse()
            .map_err(|_| CliError::Usage(format!("bad split {s:?}; use loso or kfold<k>")))?;
        return Ok(SplitSpec::Kfold { k });
    }
    Err(CliError::Usage(format!(
        "bad split {s:?}; use loso or kfold<k>"
    )))
}

pub fn parse_model(name: &str) -> Result<ModelSpec, CliError> {
    ModelSpec::parse(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown model {name:?}; expected et, adalstm, lstm, lda, or svm"
        ))
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_provenance(out: &Path, provenance: &Provenance) -> Result<(), CliError> {
    write_json(&out.join("provenance.json"), provenance)
}

/// Resolves the episode source into a loaded dataset.
pub fn load_source(
    source: &DatasetSource,
    label_set: &[PostureLabel],
) -> Result<Dataset, CliError> {
    match source {
        DatasetSource::Manifest { manifest } => Ok(load_dataset(manifest, label_set)?),
        DatasetSource::Synth { synth } => Ok(generate_dataset(synth)),
    }
}

pub fn filter_location(ds: &Dataset, location: Option<SensorLocation>) -> Dataset {
    match location {
        Some(loc) => ds.filter_location(loc),
        None => ds.clone(),
    }
}

fn normalized_episodes(ds: &Dataset) -> Result<Vec<Episode>, CliError> {
    ds.episodes
        .iter()
        .map(|e| Ok(normalize_episode(e)?))
        .collect()
}

/// `synth`: generate a dataset and write the CSV files plus manifest.
pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<PathBuf, CliError> {
    let ds = generate_dataset(cfg);
    let manifest = write_dataset(&ds, &out.join("data"))?;
    println!(
        "wrote {} episodes ({} subjects x {} postures x {} locations) to {}",
        ds.episodes.len(),
        cfg.subjects,
        cfg.postures.len(),
        cfg.locations.len(),
        manifest.display()
    );
    Ok(manifest)
}

/// `features`: export the per-episode meta-feature matrix.
pub fn cmd_features(ds: &Dataset, out: &Path) -> Result<(), CliError> {
    let episodes = normalized_episodes(ds)?;
    let nds = Dataset::new(episodes, ds.label_set.clone(), &ds.provenance);
    let window_len = min_episode_length(&nds)?;
    let rows: Vec<FeatureRow> = nds
        .episodes
        .iter()
        .map(|e| {
            let meta = episode_meta_features(e, window_len, FEATURE_WINDOW_OVERLAP)?;
            Ok(FeatureRow {
                values: meta.values,
                label: e.label.to_string(),
                subject_id: e.subject_id.clone(),
                location: e.location.to_string(),
            })
        })
        .collect::<Result<_, CliError>>()?;
    let mut buf = Vec::new();
    write_feature_matrix_csv(&mut buf, &rows)
        .map_err(|e| CliError::Data(format!("feature csv: {e}")))?;
    let path = out.join("features.csv");
    write_text(&path, &String::from_utf8(buf).expect("utf8 csv"))?;
    println!(
        "wrote {} feature rows (window {} samples) to {}",
        rows.len(),
        window_len,
        path.display()
    );
    Ok(())
}

fn importance_csv(model: &BaggedEnsemble) -> Result<String, CliError> {
    let imp = model.feature_importance()?;
    let mut text = String::from("feature,label,importance\n");
    for slot in 1..=FEATURE_COUNT {
        text.push_str(&format!(
            "f{slot},{},{}\n",
            feature_label(slot),
            imp[slot - 1]
        ));
    }
    Ok(text)
}

fn fit_ensemble_on(
    ds: &Dataset,
    params: &posture_core::ensemble::EnsembleParams,
    seed: u64,
) -> Result<BaggedEnsemble, CliError> {
    let episodes = normalized_episodes(ds)?;
    let nds = Dataset::new(episodes, ds.label_set.clone(), &ds.provenance);
    let window_len = min_episode_length(&nds)?;
    let rows: Vec<FeatureVector48> = nds
        .episodes
        .iter()
        .map(|e| Ok(episode_meta_features(e, window_len, FEATURE_WINDOW_OVERLAP)?.values))
        .collect::<Result<_, CliError>>()?;
    let labels: Vec<PostureLabel> = nds.episodes.iter().map(|e| e.label).collect();
    Ok(BaggedEnsemble::fit(
        &rows,
        &labels,
        &ds.label_set,
        params,
        seed,
    )?)
}

/// `train`: fit one model on the whole (filtered) dataset and persist it.
pub fn cmd_train(ds: &Dataset, spec: &ModelSpec, seed: u64, out: &Path) -> Result<(), CliError> {
    match spec {
        ModelSpec::EnsembleTree { params } => {
            let model = fit_ensemble_on(ds, params, seed)?;
            write_text(&out.join("model.json"), &model.to_json()?)?;
            write_text(&out.join("importance.csv"), &importance_csv(&model)?)?;
            println!("wrote model.json and importance.csv to {}", out.display());
        }
        ModelSpec::AdaLstm { config } | ModelSpec::LstmFixed { config } => {
            let mut config = config.clone();
            if matches!(spec, ModelSpec::LstmFixed { .. }) {
                config.schedule = posture_core::adalstm::LrSchedule::Fixed;
            }
            let episodes = normalized_episodes(ds)?;
            let mut model = AdaLstmModel::with_defaults(&ds.label_set, config);
            let report = model.train(&episodes, seed)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_text(&out.join("model.json"), &model.to_json()?)?;
            let mut buf = Vec::new();
            report
                .write_loss_csv(&mut buf)
                .map_err(|e| CliError::Data(format!("loss trace: {e}")))?;
            write_text(
                &out.join("loss_trace.csv"),
                &String::from_utf8(buf).expect("utf8 csv"),
            )?;
            println!("wrote model.json and loss_trace.csv to {}", out.display());
        }
        ModelSpec::Lda => {
            let episodes = normalized_episodes(ds)?;
            let rows: Vec<_> = episodes
                .iter()
                .map(mean_features)
                .collect::<Result<_, _>>()?;
            let labels: Vec<PostureLabel> = episodes.iter().map(|e| e.label).collect();
            let model = LdaModel::fit(&rows, &labels, &ds.label_set, true)?;
            write_json(&out.join("model.json"), &model)?;
            println!("wrote model.json to {}", out.display());
        }
        ModelSpec::Svm { c } => {
            let episodes = normalized_episodes(ds)?;
            let rows: Vec<_> = episodes
                .iter()
                .map(mean_features)
                .collect::<Result<_, _>>()?;
            let labels: Vec<PostureLabel> = episodes.iter().map(|e| e.label).collect();
            let model = LinearSvmModel::fit(&rows, &labels, &ds.label_set, *c)?;
            if model.converged.iter().any(|&conv| !conv) {
                eprintln!("warning: svm did not converge within the iteration budget");
            }
            write_json(&out.join("model.json"), &model)?;
            println!("wrote model.json to {}", out.display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct WrappedReport<'a> {
    provenance: &'a Provenance,
    report: &'a EvalReport,
}

fn write_report_products(
    report: &EvalReport,
    provenance: &Provenance,
    location_tag: &str,
    out: &Path,
) -> Result<(), CliError> {
    write_json(
        &out.join("report.json"),
        &WrappedReport { provenance, report },
    )?;
    let mut buf = Vec::new();
    report
        .write_folds_csv(&mut buf)
        .map_err(|e| CliError::Data(format!("folds csv: {e}")))?;
    write_text(
        &out.join("folds.csv"),
        &String::from_utf8(buf).expect("utf8 csv"),
    )?;

    let mut buf = Vec::new();
    buf.extend_from_slice(b"location,model,mean_f1,std_f1,cov\n");
    report
        .write_summary_csv_row(&mut buf, location_tag)
        .map_err(|e| CliError::Data(format!("summary csv: {e}")))?;
    write_text(
        &out.join("summary.csv"),
        &String::from_utf8(buf).expect("utf8 csv"),
    )?;

    let mut buf = Vec::new();
    write_confusion_csv(&mut buf, &report.aggregate_confusion)
        .map_err(|e| CliError::Data(format!("confusion csv: {e}")))?;
    write_text(
        &out.join("confusion_aggregate.csv"),
        &String::from_utf8(buf).expect("utf8 csv"),
    )?;
    Ok(())
}

/// `eval`: one cross-validated experiment with full report products.
pub fn cmd_eval(
    ds: &Dataset,
    spec: &ModelSpec,
    split: &SplitSpec,
    seed: u64,
    location_tag: &str,
    provenance: &Provenance,
    out: &Path,
) -> Result<(), CliError> {
    let report = run_experiment(ds, spec, split, seed)?;
    write_report_products(&report, provenance, location_tag, out)?;
    println!(
        "{} {} on {}: mean F1 {:.4}, CoV {}",
        report.model,
        report.split,
        location_tag,
        report.summary.mean.f1,
        report
            .cov_f1
            .map_or("n/a".to_string(), |v| format!("{v:.4}")),
    );
    Ok(())
}

#[derive(Serialize)]
struct KruskalProduct<'a> {
    metric: &'a str,
    groups: Vec<String>,
    h: Option<f64>,
    p_value: Option<f64>,
    degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
}

/// `compare`: every model over every location, a comparison table, and a
/// Kruskal-Wallis test between the models' per-location F1 CoV values.
pub fn cmd_compare(
    ds: &Dataset,
    specs: &[ModelSpec],
    split: &SplitSpec,
    locations: &[SensorLocation],
    seed: u64,
    provenance: &Provenance,
    out: &Path,
) -> Result<(), CliError> {
    if specs.len() < 2 {
        return Err(CliError::Usage(
            "compare needs at least two models (--models a,b)".into(),
        ));
    }
    if locations.is_empty() {
        return Err(CliError::Data(
            "no sensor locations present to compare on".into(),
        ));
    }

    let mut table = String::from("location,model,mean_f1,std_f1,cov\n");
    let mut cov_groups: Vec<Vec<f64>> = vec![Vec::new(); specs.len()];
    for &location in locations {
        let dsl = ds.filter_location(location);
        for (mi, spec) in specs.iter().enumerate() {
            let report = run_experiment(&dsl, spec, split, seed)?;
            let mut row = Vec::new();
            report
                .write_summary_csv_row(&mut row, location.name())
                .map_err(|e| CliError::Data(format!("summary row: {e}")))?;
            table.push_str(&String::from_utf8(row).expect("utf8 csv"));
            if let Some(cov) = report.cov_f1 {
                cov_groups[mi].push(cov);
            }
            write_json(
                &out.join(format!("eval_{}_{}.json", spec.name(), location.name())),
                &WrappedReport {
                    provenance,
                    report: &report,
                },
            )?;
        }
    }
    write_text(&out.join("comparison.csv"), &table)?;

    let group_names: Vec<String> = specs.iter().map(|s| s.name().to_string()).collect();
    let total_covs: usize = cov_groups.iter().map(|g| g.len()).sum();
    let product = if cov_groups.iter().all(|g| !g.is_empty()) && total_covs >= 3 {
        let kruskal = kruskal_wallis(&cov_groups)?;
        println!(
            "compared {} models over {} locations; Kruskal-Wallis on F1 CoV: H = {:.4}, p = {:.4}",
            specs.len(),
            locations.len(),
            kruskal.h,
            kruskal.p_value
        );
        KruskalProduct {
            metric: "cov_f1",
            groups: group_names,
            h: Some(kruskal.h),
            p_value: Some(kruskal.p_value),
            degenerate: kruskal.degenerate,
            note: None,
        }
    } else {
        println!(
            "compared {} models over {} locations; too few CoV values for a rank test",
            specs.len(),
            locations.len()
        );
        KruskalProduct {
            metric: "cov_f1",
            groups: group_names,
            h: None,
            p_value: None,
            degenerate: false,
            note: Some("rank test needs at least three CoV values across the groups"),
        }
    };
    write_json(&out.join("kruskal.json"), &product)?;
    Ok(())
}

/// `importance`: fit the ensemble on everything and export the importance
/// table.
pub fn cmd_importance(ds: &Dataset, seed: u64, out: &Path) -> Result<(), CliError> {
    let model = fit_ensemble_on(ds, &Default::default(), seed)?;
    write_text(&out.join("importance.csv"), &importance_csv(&model)?)?;
    let ranking = model.importance_ranking()?;
    let top: Vec<String> = ranking
        .iter()
        .take(8)
        .map(|&slot| format!("f{}({})", slot + 1, feature_label(slot + 1)))
        .collect();
    println!("top features: {}", top.join(", "));
    println!("wrote importance.csv to {}", out.display());
    Ok(())
}

//! `posture` — command-line pipeline for lying-posture classification.
//!
//! Subcommands: `synth`, `features`, `train`, `eval`, `compare`,
//! `importance`. A JSON config file supplies defaults; flags override it.
//! Every randomized step takes the run seed, and rerunning a command with
//! the same config and seed reproduces its outputs byte for byte.

mod commands;
mod config;
mod error;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use posture_core::signal::{Dataset, PostureLabel, SensorLocation};
use posture_core::synth::SynthConfig;

use commands::{
    cmd_compare, cmd_eval, cmd_features, cmd_importance, cmd_synth, cmd_train, filter_location,
    load_source, parse_locations, parse_model, parse_postures, parse_split, write_provenance,
};
use config::{DatasetSource, ExperimentConfig, Provenance};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "posture",
    version,
    about = "Lying-posture classification from a single tri-axial accelerometer"
)]
struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (1 keeps runs bit-reproducible on any machine).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV files plus manifest).
    Synth {
        #[arg(long)]
        subjects: Option<usize>,
        /// Episodes per (subject, posture, location).
        #[arg(long)]
        episodes_per: Option<usize>,
        /// Comma-separated posture names.
        #[arg(long)]
        postures: Option<String>,
        /// Comma-separated sensor locations.
        #[arg(long)]
        locations: Option<String>,
    },
    /// Export the per-episode meta-feature matrix as CSV.
    Features {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        location: Option<String>,
    },
    /// Fit one model on the whole dataset and persist it.
    Train {
        /// et | adalstm | lstm | lda | svm
        #[arg(long)]
        model: String,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        location: Option<String>,
    },
    /// Run one cross-validated experiment and write the report.
    Eval {
        /// et | adalstm | lstm | lda | svm
        #[arg(long)]
        model: String,
        /// loso | kfold<k>
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        location: Option<String>,
    },
    /// Evaluate several models across locations and compare their F1 CoV.
    Compare {
        /// Comma-separated model names (at least two).
        #[arg(long)]
        models: String,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Comma-separated sensor locations; defaults to those present.
        #[arg(long)]
        locations: Option<String>,
    },
    /// Fit the tree ensemble and export feature importance.
    Importance {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        location: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))
        }
    }
}

fn declared_postures(cfg: &ExperimentConfig) -> Result<Vec<PostureLabel>, CliError> {
    match &cfg.postures {
        None => Ok(PostureLabel::ALL.to_vec()),
        Some(names) => parse_postures(&names.join(",")),
    }
}

/// Without an explicit posture declaration, the task's label set is the
/// set of postures that actually occur in the data (canonical order).
fn shrink_label_set(mut ds: Dataset, declared: bool) -> Dataset {
    if !declared {
        ds.label_set = PostureLabel::ALL
            .iter()
            .copied()
            .filter(|l| ds.episodes.iter().any(|e| e.label == *l))
            .collect();
    }
    ds
}

/// Dataset resolution: an explicit `--manifest` wins, then the config's
/// dataset block.
fn resolve_source(
    manifest: &Option<PathBuf>,
    cfg: &ExperimentConfig,
) -> Result<DatasetSource, CliError> {
    if let Some(path) = manifest {
        return Ok(DatasetSource::Manifest {
            manifest: path.clone(),
        });
    }
    cfg.dataset.clone().ok_or_else(|| {
        CliError::Usage("no dataset: pass --manifest or a config with a dataset block".into())
    })
}

fn resolve_location(
    flag: &Option<String>,
    cfg: &ExperimentConfig,
) -> Result<Option<SensorLocation>, CliError> {
    if let Some(name) = flag {
        return Ok(Some(
            parse_locations(name)?
                .into_iter()
                .next()
                .ok_or_else(|| CliError::Usage("empty --location".into()))?,
        ));
    }
    match &cfg.locations {
        Some(names) if names.len() == 1 => Ok(Some(
            parse_locations(&names[0])?
                .into_iter()
                .next()
                .expect("one location"),
        )),
        _ => Ok(None),
    }
}

fn locations_present(ds: &Dataset) -> Vec<SensorLocation> {
    let mut locs: Vec<SensorLocation> = ds.episodes.iter().map(|e| e.location).collect();
    locs.sort();
    locs.dedup();
    locs
}

fn run(cli: Cli) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;

    let cfg = load_config(&cli.config)?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let out = cli
        .out
        .clone()
        .or(cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    match &cli.command {
        Command::Synth {
            subjects,
            episodes_per,
            postures,
            locations,
        } => {
            let mut synth_cfg = match &cfg.dataset {
                Some(DatasetSource::Synth { synth }) => synth.clone(),
                _ => SynthConfig::default(),
            };
            if let Some(n) = subjects {
                synth_cfg.subjects = *n;
            }
            if let Some(n) = episodes_per {
                synth_cfg.episodes_per_combination = *n;
            }
            if let Some(p) = postures {
                synth_cfg.postures = parse_postures(p)?;
            }
            if let Some(l) = locations {
                synth_cfg.locations = parse_locations(l)?;
            }
            synth_cfg.seed = seed;
            let provenance = Provenance::new("synth", seed, &synth_cfg);
            cmd_synth(&synth_cfg, &out)?;
            write_provenance(&out, &provenance)
        }
        Command::Features { manifest, location } => {
            let source = resolve_source(manifest, &cfg)?;
            let labels = declared_postures(&cfg)?;
            let ds = shrink_label_set(load_source(&source, &labels)?, cfg.postures.is_some());
            let ds = filter_location(&ds, resolve_location(location, &cfg)?);
            let provenance = Provenance::new("features", seed, &(&source, &labels));
            cmd_features(&ds, &out)?;
            write_provenance(&out, &provenance)
        }
        Command::Train {
            model,
            manifest,
            location,
        } => {
            let spec = cfg
                .model
                .clone()
                .filter(|m| m.name() == model)
                .unwrap_or(parse_model(model)?);
            let source = resolve_source(manifest, &cfg)?;
            let labels = declared_postures(&cfg)?;
            let ds = shrink_label_set(load_source(&source, &labels)?, cfg.postures.is_some());
            let ds = filter_location(&ds, resolve_location(location, &cfg)?);
            let provenance = Provenance::new("train", seed, &(&source, &spec, &labels));
            cmd_train(&ds, &spec, seed, &out)?;
            write_provenance(&out, &provenance)
        }
        Command::Eval {
            model,
            split,
            manifest,
            location,
        } => {
            let spec = cfg
                .model
                .clone()
                .filter(|m| m.name() == model)
                .unwrap_or(parse_model(model)?);
            let split = match split {
                Some(s) => parse_split(s)?,
                None => cfg
                    .split
                    .ok_or_else(|| CliError::Usage("no split: pass --split".into()))?,
            };
            let source = resolve_source(manifest, &cfg)?;
            let labels = declared_postures(&cfg)?;
            let ds = shrink_label_set(load_source(&source, &labels)?, cfg.postures.is_some());
            let location = resolve_location(location, &cfg)?;
            let ds = filter_location(&ds, location);
            let tag = location.map_or("all".to_string(), |l| l.name().to_string());
            let provenance =
                Provenance::new("eval", seed, &(&source, &spec, &split, &labels, &tag));
            cmd_eval(&ds, &spec, &split, seed, &tag, &provenance, &out)?;
            write_provenance(&out, &provenance)
        }
        Command::Compare {
            models,
            split,
            manifest,
            locations,
        } => {
            let specs: Vec<_> = models
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(parse_model)
                .collect::<Result<_, _>>()?;
            let split = match split {
                Some(s) => parse_split(s)?,
                None => cfg
                    .split
                    .unwrap_or(posture_core::eval::experiment::SplitSpec::Loso),
            };
            let source = resolve_source(manifest, &cfg)?;
            let labels = declared_postures(&cfg)?;
            let ds = shrink_label_set(load_source(&source, &labels)?, cfg.postures.is_some());
            let locs = match locations {
                Some(l) => parse_locations(l)?,
                None => match &cfg.locations {
                    Some(names) => parse_locations(&names.join(","))?,
                    None => locations_present(&ds),
                },
            };
            let provenance =
                Provenance::new("compare", seed, &(&source, &specs, &split, &labels, &locs));
            cmd_compare(&ds, &specs, &split, &locs, seed, &provenance, &out)?;
            write_provenance(&out, &provenance)
        }
        Command::Importance { manifest, location } => {
            let source = resolve_source(manifest, &cfg)?;
            let labels = declared_postures(&cfg)?;
            let ds = shrink_label_set(load_source(&source, &labels)?, cfg.postures.is_some());
            let ds = filter_location(&ds, resolve_location(location, &cfg)?);
            let provenance = Provenance::new("importance", seed, &(&source, &labels));
            cmd_importance(&ds, seed, &out)?;
            write_provenance(&out, &provenance)
        }
    }
}

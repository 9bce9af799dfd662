//! Command-line surface. The `evdet` binary only calls [`main`].
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 bench budget
//! exceeded.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::augmentation::{build_train_set, AugmentConfig};
use crate::bench::{run_bench, BenchConfig};
use crate::classifier::{featurize_records, Classifier, FeatureClassifier, SyntheticClassifier};
use crate::config::{ClassifierKind, PipelineConfig};
use crate::data_engine::{label_events, mine_with, Dataset, MinedEvent, ModelRegistry, RetrainConfig};
use crate::evaluation::{score_records, sweep_threshold, EvalReport, DEFAULT_RECALL_TARGET, DEFAULT_SWEEP};
use crate::io::{read_json, read_jsonl, write_json, write_jsonl};
use crate::pipeline::{run_log, Pipeline, PipelineSettings};
use crate::simulator::{generate_scene, split_dataset, FrameRecord, Split};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Threshold(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Threshold(_) => 3,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "evdet", about = "Active emergency vehicle detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config; every section is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled scene as JSON Lines records.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        actors: Option<usize>,
        #[arg(long)]
        scene_id: Option<String>,
    },
    /// Train the feature classifier on the train split of a record file.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Replay records through the pipeline and write per-frame decisions.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Only replay records of this split.
        #[arg(long)]
        split: Option<SplitArg>,
        /// Where to write the evaluation report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Frame-level PR metrics and actor-level metrics for one model.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        split: Option<SplitArg>,
        /// Report to compute percent changes against.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Actor-level metrics across smoother thresholds.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        split: Option<SplitArg>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP.to_vec())]
        thresholds: Vec<f64>,
    },
    /// Rebalance a record file with box augmentation and negative downsampling.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pos_ratio: Option<u32>,
        #[arg(long)]
        neg_downsample: Option<u32>,
        /// Where to write the fitted box distribution.
        #[arg(long)]
        distribution: Option<PathBuf>,
    },
    /// Find tracks the model declares active in new logs.
    Mine {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        /// A record file or a directory of `.jsonl` record files.
        #[arg(long)]
        logs: PathBuf,
    },
    /// Label mined events, merge them and retrain.
    Retrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// Ground-truth records for the mined logs.
        #[arg(long)]
        logs: PathBuf,
        /// Model the events were mined with; defaults to the config's model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Register the new model in this registry directory.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Write the merged dataset here.
        #[arg(long)]
        data_out: Option<PathBuf>,
    },
    /// Steady-load latency benchmark.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        tracks: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn require_out(common: &Common) -> Result<&Path, CliError> {
    common
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("--out is required".into()))
}

fn read_records(path: &Path, split: Option<SplitArg>) -> Result<Vec<FrameRecord>, CliError> {
    let mut recs: Vec<FrameRecord> = read_jsonl(path).map_err(data)?;
    if let Some(s) = split {
        let s = Split::from(s);
        recs.retain(|r| r.split == Some(s));
    }
    Ok(recs)
}

fn read_log_dir(path: &Path) -> Result<Vec<FrameRecord>, CliError> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(data)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.extend(read_records(&f, None)?);
        }
        Ok(out)
    } else {
        read_records(path, None)
    }
}

fn load_feature_model(cfg: &PipelineConfig, flag: Option<&Path>) -> Result<FeatureClassifier, CliError> {
    let path = flag
        .or(cfg.classifier.model.as_deref())
        .ok_or_else(|| CliError::Usage("a feature model is required (--model or classifier.model)".into()))?;
    FeatureClassifier::load(path).map_err(data)
}

fn load_classifier(cfg: &PipelineConfig, flag: Option<&Path>) -> Result<Box<dyn Classifier>, CliError> {
    match (cfg.classifier.kind, flag) {
        (ClassifierKind::Synthetic, None) => Ok(Box::new(SyntheticClassifier {
            seed: cfg.seed,
            ..cfg.classifier.synthetic
        })),
        _ => Ok(Box::new(load_feature_model(cfg, flag)?)),
    }
}

fn retrain_config(cfg: &PipelineConfig) -> RetrainConfig {
    RetrainConfig {
        train: crate::classifier::TrainConfig {
            seed: cfg.seed,
            ..cfg.train
        },
        augment: cfg.augment,
        smoother: cfg.smoother,
        split_ratio: cfg.split_ratio(),
        split_seed: cfg.seed,
        augment_seed: cfg.seed,
        render_seed: cfg.render.seed,
        patch_size: cfg.crop.patch_size,
        noise_amplitude: cfg.render.noise_amplitude,
    }
}

fn scored_report(
    cfg: &PipelineConfig,
    clf: &dyn Classifier,
    mut recs: Vec<FrameRecord>,
    name: &str,
) -> Result<(Vec<FrameRecord>, EvalReport), CliError> {
    score_records(&mut recs, clf, cfg.render.seed, &cfg.render_params()).map_err(data)?;
    let report = EvalReport::build(name, &recs, cfg.smoother, DEFAULT_RECALL_TARGET).map_err(data)?;
    Ok((recs, report))
}

fn report_name(path: &Path) -> String {
    path.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned())
}

pub fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate {
            common,
            actors,
            scene_id,
        } => {
            let cfg = load_config(&common)?;
            let out = require_out(&common)?;
            let mut scene = cfg.scene.clone();
            scene.seed = cfg.seed;
            if let Some(n) = actors {
                scene.actor_count = n;
            }
            if let Some(id) = scene_id {
                scene.scene_id = id;
            }
            let mut recs = generate_scene(&scene, &cfg.camera, cfg.crop.min_width).map_err(data)?.records;
            split_dataset(&mut recs, cfg.split_ratio(), cfg.seed);
            write_jsonl(out, &recs).map_err(data)?;
            println!(
                "wrote {} records of {} actors to {}",
                recs.len(),
                scene.actor_count,
                out.display()
            );
        }
        Command::Train { common, data: path } => {
            let cfg = load_config(&common)?;
            let out = require_out(&common)?;
            let recs = read_records(&path, None)?;
            // records without a split tag count as training data
            let train: Vec<FrameRecord> = recs
                .into_iter()
                .filter(|r| r.split != Some(Split::Test))
                .map(|r| FrameRecord {
                    split: Some(Split::Train),
                    ..r
                })
                .collect();
            let rc = retrain_config(&cfg);
            let (model, report) =
                crate::data_engine::train_on(&Dataset::new(train), &cfg.camera, &rc, &Default::default()).map_err(data)?;
            let model = FeatureClassifier {
                model_version: 1,
                ..model
            };
            model.save(out).map_err(data)?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
        }
        Command::Run {
            common,
            data: path,
            model,
            split,
            report,
        } => {
            let cfg = load_config(&common)?;
            let out = require_out(&common)?;
            let recs = read_records(&path, split)?;
            let clf = load_classifier(&cfg, model.as_deref())?;
            let settings = PipelineSettings {
                camera: cfg.camera,
                min_width: cfg.crop.min_width,
                render: cfg.render_params(),
                smoother: cfg.smoother,
                threads: cfg.bench.threads,
            };
            let mut pipeline = Pipeline::new(settings, clf).map_err(|e| CliError::Usage(e.to_string()))?;
            let run = run_log(&mut pipeline, &recs, cfg.render.seed, &report_name(out)).map_err(data)?;
            write_jsonl(out, &run.decisions).map_err(data)?;
            if let Some(r) = report {
                write_json(&r, &run.report).map_err(data)?;
            }
            print!("{}", run.report.to_table());
            println!(
                "latency: {} frames, mean {:.3} ms, p99 {:.3} ms",
                run.latency.frames, run.latency.mean_ms, run.latency.p99_ms
            );
        }
        Command::Evaluate {
            common,
            data: path,
            model,
            split,
            baseline,
        } => {
            let cfg = load_config(&common)?;
            let clf = load_classifier(&cfg, model.as_deref())?;
            let recs = read_records(&path, split)?;
            let name = common.out.as_deref().map_or("report".into(), report_name);
            let (_, mut report) = scored_report(&cfg, clf.as_ref(), recs, &name)?;
            if let Some(b) = baseline {
                let base: EvalReport = read_json(&b).map_err(data)?;
                report = report.with_baseline(&base);
            }
            if let Some(out) = &common.out {
                write_json(out, &report).map_err(data)?;
            }
            print!("{}", report.to_table());
        }
        Command::Sweep {
            common,
            data: path,
            model,
            split,
            thresholds,
        } => {
            let cfg = load_config(&common)?;
            if thresholds.is_empty() {
                return Err(CliError::Usage("need at least one threshold".into()));
            }
            let clf = load_classifier(&cfg, model.as_deref())?;
            let mut recs = read_records(&path, split)?;
            score_records(&mut recs, clf.as_ref(), cfg.render.seed, &cfg.render_params()).map_err(data)?;
            let sweep = sweep_threshold(&recs, cfg.smoother, &thresholds).map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(out) = &common.out {
                write_json(out, &sweep).map_err(data)?;
            }
            print!("{}", sweep.to_table());
        }
        Command::Augment {
            common,
            data: path,
            pos_ratio,
            neg_downsample,
            distribution,
        } => {
            let cfg = load_config(&common)?;
            let out = require_out(&common)?;
            let aug = AugmentConfig {
                positive_ratio: pos_ratio.unwrap_or(cfg.augment.positive_ratio),
                negative_downsample: neg_downsample.unwrap_or(cfg.augment.negative_downsample),
                ..cfg.augment
            };
            let recs = read_records(&path, None)?;
            let (set, report) =
                build_train_set(&recs, &cfg.camera, &aug, cfg.seed).map_err(|e| CliError::Usage(e.to_string()))?;
            write_jsonl(out, &set).map_err(data)?;
            if let (Some(p), Some(d)) = (distribution, &report.distribution) {
                write_json(&p, d).map_err(data)?;
            }
            println!(
                "positives {} -> {}, negatives {} -> {}, fallback copies {}",
                report.positives_in, report.positives_out, report.negatives_in, report.negatives_out, report.fallback_copies
            );
        }
        Command::Mine { common, model, logs } => {
            let cfg = load_config(&common)?;
            let out = require_out(&common)?;
            let m = load_feature_model(&cfg, model.as_deref())?;
            let mut recs = read_log_dir(&logs)?;
            let events = mine_with(
                &m,
                &mut recs,
                cfg.smoother,
                cfg.data_engine.mining_mode,
                m.model_version,
                &m.training_scenes,
                cfg.render.seed,
                &cfg.render_params(),
            )
            .map_err(data)?;
            write_jsonl(out, &events).map_err(data)?;
            println!("mined {} events from {} records", events.len(), recs.len());
        }
        Command::Retrain {
            common,
            data: path,
            events,
            logs,
            model,
            registry,
            data_out,
        } => {
            let cfg = load_config(&common)?;
            let out = require_out(&common)?;
            let previous = load_feature_model(&cfg, model.as_deref())?;
            let recs = read_records(&path, None)?;
            let test: Vec<FrameRecord> = recs.iter().filter(|r| r.split == Some(Split::Test)).cloned().collect();
            if test.is_empty() {
                return Err(CliError::Data("dataset has no test split to measure against".into()));
            }
            let events: Vec<MinedEvent> = read_jsonl(&events).map_err(data)?;
            let truth = read_log_dir(&logs)?;
            let labeled = label_events(&events, &truth).map_err(data)?;
            let mut dataset = Dataset::new(recs);
            let outcome =
                crate::data_engine::retrain_cycle(&mut dataset, labeled, &previous, &cfg.camera, &test, &retrain_config(&cfg))
                    .map_err(data)?;
            outcome.model.save(out).map_err(data)?;
            if let Some(dir) = registry {
                let mut reg = ModelRegistry::open(&dir).map_err(data)?;
                if reg.latest_version().is_none() {
                    reg.register(&previous, "initial").map_err(data)?;
                }
                reg.register(&outcome.model, &format!("{} mined events", events.len()))
                    .map_err(data)?;
            }
            if let Some(p) = data_out {
                write_jsonl(&p, &dataset.records).map_err(data)?;
            }
            println!("added {} records", outcome.records_added);
            print!("{}", outcome.after.to_table());
        }
        Command::Bench {
            common,
            model,
            frames,
            tracks,
            threads,
        } => {
            let cfg = load_config(&common)?;
            let clf: Box<dyn Classifier> = match (model.as_deref(), cfg.classifier.model.as_deref()) {
                (None, None) if cfg.classifier.kind == ClassifierKind::Feature => Box::new(quick_model(&cfg)?),
                _ => load_classifier(&cfg, model.as_deref())?,
            };
            let bench = BenchConfig {
                tracks_per_frame: tracks.unwrap_or(cfg.bench.tracks_per_frame),
                frames: frames.unwrap_or(cfg.bench.frames),
                budget_ms: cfg.bench.budget_ms,
                seed: cfg.seed,
            };
            let settings = PipelineSettings {
                camera: cfg.camera,
                min_width: cfg.crop.min_width,
                render: cfg.render_params(),
                smoother: cfg.smoother,
                threads: threads.unwrap_or(cfg.bench.threads),
            };
            let mut scene = cfg.scene.clone();
            scene.seed = cfg.seed;
            let report = run_bench(&bench, settings, scene, clf).map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(out) = &common.out {
                write_json(out, &report).map_err(data)?;
            }
            println!(
                "{} tracks x {} frames, {} thread(s), patch {}: mean {:.3} ms, p99 {:.3} ms (budget {} ms)",
                report.tracks_per_frame,
                report.frames,
                report.threads,
                report.patch_size,
                report.latency.mean_ms,
                report.latency.p99_ms,
                report.budget_ms
            );
            if !report.passed {
                return Err(CliError::Threshold(format!(
                    "mean frame latency {:.3} ms exceeds {} ms",
                    report.latency.mean_ms, report.budget_ms
                )));
            }
        }
    }
    Ok(())
}

/// Small model trained on a fresh scene, for benchmarking without a model file.
fn quick_model(cfg: &PipelineConfig) -> Result<FeatureClassifier, CliError> {
    let mut scene = cfg.scene.clone();
    scene.actor_count = scene.actor_count.min(200);
    scene.scene_id = "bench-train".into();
    scene.seed = cfg.seed;
    let recs = generate_scene(&scene, &cfg.camera, cfg.crop.min_width).map_err(data)?.records;
    let (set, _) = build_train_set(&recs, &cfg.camera, &cfg.augment, cfg.seed).map_err(data)?;
    let samples = featurize_records(&set, cfg.render.seed, &cfg.render_params());
    let (m, _) = FeatureClassifier::fit(&samples, &cfg.train).map_err(data)?;
    Ok(m)
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

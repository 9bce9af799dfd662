//! Mine, label and retrain.
//!
//! A model is run over new logs; every track the smoother declares active
//! on at least one frame becomes a [`MinedEvent`], right or wrong. Events
//! are labeled from ground truth, merged into the dataset under the usual
//! actor-level split, and the classifier is retrained on the rebalanced
//! train split. Deltas are always measured on a fixed test set supplied by
//! the caller.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::{build_train_set, AugmentConfig, AugmentError};
use crate::classifier::{featurize_records, Classifier, ClassifierError, FeatureClassifier, TrainConfig, TrainReport};
use crate::evaluation::{score_records, EvalError, EvalReport, DEFAULT_RECALL_TARGET};
use crate::geometry::{CameraModel, TrackId};
use crate::simulator::{assign_split, FrameRecord, Provenance, RenderParams, Split, SplitRatio};
use crate::smoother::{SmootherConfig, SmootherError, TrackSmoother};

#[derive(Debug, Error)]
pub enum DataEngineError {
    #[error("log scene {0} was used to train the mining model")]
    LogOverlapsTraining(String),
    #[error("no ground truth for mined track {scene_id}/{track_id}")]
    MissingGroundTruth { scene_id: String, track_id: TrackId },
    #[error("test actor {scene_id}/{track_id} leaked into the train set")]
    TestLeak { scene_id: String, track_id: TrackId },
    #[error("record {scene_id}/{track_id} frame {frame_index} has a valid crop but no score")]
    MissingScore {
        scene_id: String,
        track_id: TrackId,
        frame_index: u64,
    },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Smoother(#[from] SmootherError),
    #[error("registry: {0}")]
    Registry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MiningMode {
    /// Mine tracks whose smoothed state is active on some frame.
    #[default]
    Smoothed,
    /// Mine tracks with any positive frame score.
    PerFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedEvent {
    pub scene_id: String,
    pub track_id: TrackId,
    pub model_version: u32,
    pub first_frame: u64,
    pub last_frame: u64,
    pub frames: Vec<u64>,
    pub scores: Vec<Option<f64>>,
    pub smoothed: Vec<bool>,
}

impl MinedEvent {
    pub fn key(&self) -> (String, TrackId) {
        (self.scene_id.clone(), self.track_id)
    }
}

/// Mines already-scored log records. One event per `(scene, track)`.
pub fn mine(
    logs: &[FrameRecord],
    smoother: SmootherConfig,
    mode: MiningMode,
    model_version: u32,
    training_scenes: &[String],
) -> Result<Vec<MinedEvent>, DataEngineError> {
    let trained: BTreeSet<&str> = training_scenes.iter().map(String::as_str).collect();
    let mut by_track: BTreeMap<(String, TrackId), Vec<&FrameRecord>> = BTreeMap::new();
    for r in logs {
        if trained.contains(r.scene_id.as_str()) {
            return Err(DataEngineError::LogOverlapsTraining(r.scene_id.clone()));
        }
        by_track.entry(r.actor_key()).or_default().push(r);
    }
    let mut events = Vec::new();
    for ((scene_id, track_id), mut frames) in by_track {
        frames.sort_by_key(|r| r.frame_index);
        let mut s = TrackSmoother::new(smoother)?;
        let mut scores = Vec::with_capacity(frames.len());
        let mut smoothed = Vec::with_capacity(frames.len());
        for r in &frames {
            let score = match (r.crop.valid, r.score) {
                (true, Some(x)) => Some(x),
                (true, None) => {
                    return Err(DataEngineError::MissingScore {
                        scene_id,
                        track_id,
                        frame_index: r.frame_index,
                    })
                }
                (false, _) => None,
            };
            scores.push(score);
            smoothed.push(s.push_and_decide(score).active);
        }
        let hit = match mode {
            MiningMode::Smoothed => smoothed.iter().any(|&a| a),
            MiningMode::PerFrame => scores.iter().flatten().any(|&x| x >= smoother.frame_threshold),
        };
        if hit {
            events.push(MinedEvent {
                scene_id,
                track_id,
                model_version,
                first_frame: frames[0].frame_index,
                last_frame: frames[frames.len() - 1].frame_index,
                frames: frames.iter().map(|r| r.frame_index).collect(),
                scores,
                smoothed,
            });
        }
    }
    Ok(events)
}

/// Scores logs with `clf` and mines them.
#[allow(clippy::too_many_arguments)]
pub fn mine_with(
    clf: &dyn Classifier,
    logs: &mut [FrameRecord],
    smoother: SmootherConfig,
    mode: MiningMode,
    model_version: u32,
    training_scenes: &[String],
    render_seed: u64,
    params: &RenderParams,
) -> Result<Vec<MinedEvent>, DataEngineError> {
    score_records(logs, clf, render_seed, params)?;
    mine(logs, smoother, mode, model_version, training_scenes)
}

/// Attaches ground-truth labels to every frame of every event. Output
/// records carry mined provenance and no score.
pub fn label_events(events: &[MinedEvent], ground_truth: &[FrameRecord]) -> Result<Vec<FrameRecord>, DataEngineError> {
    let mut index: HashMap<(&str, TrackId, u64), &FrameRecord> = HashMap::with_capacity(ground_truth.len());
    for r in ground_truth {
        index.insert((r.scene_id.as_str(), r.track_id, r.frame_index), r);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for e in events {
        if !seen.insert(e.key()) {
            continue;
        }
        for &f in &e.frames {
            let gt = index
                .get(&(e.scene_id.as_str(), e.track_id, f))
                .ok_or_else(|| DataEngineError::MissingGroundTruth {
                    scene_id: e.scene_id.clone(),
                    track_id: e.track_id,
                })?;
            out.push(FrameRecord {
                score: None,
                split: None,
                provenance: Provenance::Mined {
                    model_version: e.model_version,
                },
                ..(*gt).clone()
            });
        }
    }
    Ok(out)
}

/// Labeled records with actor-level splits and no duplicate actors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<FrameRecord>,
    actors: BTreeSet<(String, TrackId)>,
}

impl Dataset {
    pub fn new(records: Vec<FrameRecord>) -> Self {
        let actors = records.iter().map(FrameRecord::actor_key).collect();
        Self { records, actors }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn actor_count(&self) -> usize {
        self.actors.len()
    }

    pub fn contains_actor(&self, key: &(String, TrackId)) -> bool {
        self.actors.contains(key)
    }

    /// Adds records of actors not yet present, assigning splits per actor.
    /// Returns the number of records added.
    pub fn merge(&mut self, labeled: Vec<FrameRecord>, ratio: SplitRatio, split_seed: u64) -> usize {
        let before = self.records.len();
        let mut fresh = BTreeSet::new();
        for mut r in labeled {
            let key = r.actor_key();
            if self.actors.contains(&key) && !fresh.contains(&key) {
                continue;
            }
            fresh.insert(key.clone());
            self.actors.insert(key);
            r.split = Some(assign_split(&r.scene_id, r.track_id, ratio, split_seed));
            self.records.push(r);
        }
        self.records.len() - before
    }

    pub fn split(&self, which: Split) -> Vec<FrameRecord> {
        self.records.iter().filter(|r| r.split == Some(which)).cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrainConfig {
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub smoother: SmootherConfig,
    pub split_ratio: SplitRatio,
    pub split_seed: u64,
    pub augment_seed: u64,
    pub render_seed: u64,
    pub patch_size: usize,
    pub noise_amplitude: f32,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            smoother: SmootherConfig::default(),
            split_ratio: SplitRatio::default(),
            split_seed: 0,
            augment_seed: 0,
            render_seed: 0,
            patch_size: crate::geometry::DEFAULT_PATCH_SIZE,
            noise_amplitude: RenderParams::default().noise_amplitude,
        }
    }
}

impl RetrainConfig {
    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            patch_size: self.patch_size,
            noise_amplitude: self.noise_amplitude,
        }
    }
}

/// Rebalances the dataset's train split and fits a new model.
pub fn train_on(
    dataset: &Dataset,
    camera: &CameraModel,
    cfg: &RetrainConfig,
    test_actors: &BTreeSet<(String, TrackId)>,
) -> Result<(FeatureClassifier, TrainReport), DataEngineError> {
    let train = dataset.split(Split::Train);
    if let Some(r) = train.iter().find(|r| test_actors.contains(&r.actor_key())) {
        return Err(DataEngineError::TestLeak {
            scene_id: r.scene_id.clone(),
            track_id: r.track_id,
        });
    }
    let (set, _) = build_train_set(&train, camera, &cfg.augment, cfg.augment_seed)?;
    let samples = featurize_records(&set, cfg.render_seed, &cfg.render_params());
    let (mut model, report) = FeatureClassifier::fit(&samples, &cfg.train)?;
    let scenes: BTreeSet<String> = train.iter().map(|r| r.scene_id.clone()).collect();
    model.training_scenes = scenes.into_iter().collect();
    Ok((model, report))
}

pub fn evaluate_model(
    name: &str,
    model: &dyn Classifier,
    test: &[FrameRecord],
    cfg: &RetrainConfig,
) -> Result<EvalReport, DataEngineError> {
    let mut scored = test.to_vec();
    score_records(&mut scored, model, cfg.render_seed, &cfg.render_params())?;
    Ok(EvalReport::build(name, &scored, cfg.smoother, DEFAULT_RECALL_TARGET)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    pub model: FeatureClassifier,
    pub train_report: TrainReport,
    pub before: EvalReport,
    /// Carries percent changes against `before`.
    pub after: EvalReport,
    pub records_added: usize,
}

/// One mine-label-retrain cycle: `labeled` is merged into `dataset`, a new
/// model is trained and both models are evaluated on `test`.
pub fn retrain_cycle(
    dataset: &mut Dataset,
    labeled: Vec<FrameRecord>,
    previous: &FeatureClassifier,
    camera: &CameraModel,
    test: &[FrameRecord],
    cfg: &RetrainConfig,
) -> Result<CycleOutcome, DataEngineError> {
    let test_actors: BTreeSet<(String, TrackId)> = test.iter().map(FrameRecord::actor_key).collect();
    let records_added = dataset.merge(labeled, cfg.split_ratio, cfg.split_seed);
    let (mut model, train_report) = train_on(dataset, camera, cfg, &test_actors)?;
    model.model_version = previous.model_version + 1;
    model.parent_version = Some(previous.model_version);
    let before = evaluate_model(&format!("v{}", previous.model_version), previous, test, cfg)?;
    let after = evaluate_model(&format!("v{}", model.model_version), &model, test, cfg)?.with_baseline(&before);
    Ok(CycleOutcome {
        model,
        train_report,
        before,
        after,
        records_added,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub version: u32,
    pub file: String,
    pub parent_version: Option<u32>,
    pub training_scenes: Vec<String>,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<RegistryEntry>,
}

/// Directory of versioned model files plus `manifest.json`.
#[derive(Debug, Clone)]
pub struct ModelRegistry {
    dir: PathBuf,
    manifest: Manifest,
}

impl ModelRegistry {
    pub const MANIFEST: &'static str = "manifest.json";

    pub fn open(dir: &Path) -> Result<Self, DataEngineError> {
        let err = |e: std::io::Error| DataEngineError::Registry(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(err)?;
        let path = dir.join(Self::MANIFEST);
        let manifest = if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(err)?;
            serde_json::from_str(&text).map_err(|e| DataEngineError::Registry(e.to_string()))?
        } else {
            Manifest::default()
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn latest_version(&self) -> Option<u32> {
        self.manifest.entries.iter().map(|e| e.version).max()
    }

    /// Stores `model` under its own version, which must be new and whose
    /// parent, if any, must already be registered.
    pub fn register(&mut self, model: &FeatureClassifier, note: &str) -> Result<PathBuf, DataEngineError> {
        let v = model.model_version;
        if self.manifest.entries.iter().any(|e| e.version == v) {
            return Err(DataEngineError::Registry(format!("version {v} already registered")));
        }
        if let Some(p) = model.parent_version {
            if p >= v || !self.manifest.entries.iter().any(|e| e.version == p) {
                return Err(DataEngineError::Registry(format!("parent {p} of {v} is not registered")));
            }
        }
        let file = format!("model-v{v}.json");
        let path = self.dir.join(&file);
        model.save(&path)?;
        self.manifest.entries.push(RegistryEntry {
            version: v,
            file,
            parent_version: model.parent_version,
            training_scenes: model.training_scenes.clone(),
            note: note.into(),
        });
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(self.dir.join(Self::MANIFEST), text + "\n").map_err(|e| DataEngineError::Registry(e.to_string()))?;
        Ok(path)
    }

    pub fn load(&self, version: u32) -> Result<FeatureClassifier, DataEngineError> {
        let entry = self
            .manifest
            .entries
            .iter()
            .find(|e| e.version == version)
            .ok_or_else(|| DataEngineError::Registry(format!("no version {version}")))?;
        Ok(FeatureClassifier::load(&self.dir.join(&entry.file))?)
    }
}

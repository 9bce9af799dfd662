//! Per-frame activeness classifiers.
//!
//! Two implementations share the [`Classifier`] trait:
//! [`FeatureClassifier`], a trained linear model over patch statistics, and
//! [`SyntheticClassifier`], a noise model over ground truth used to exercise
//! the rest of the system at controlled error rates.

pub mod features;
pub mod focal;
pub mod model;
pub mod optim;
pub mod scheduler;
pub mod synthetic;

use thiserror::Error;

use crate::geometry::ImagePatch;
use crate::simulator::{render_patch_with, FrameRecord, RenderParams};

pub use features::{extract_features, FeatureVector, FEATURE_LEN, FEATURE_NAMES, FEATURE_SCHEMA_VERSION};
pub use focal::{focal_loss, focal_loss_grad_logit, sigmoid};
pub use model::{FeatureClassifier, Normalizer, TrainConfig, TrainReport, TrainingObjective};
pub use optim::{Adam, AdamConfig};
pub use scheduler::{PlateauConfig, PlateauScheduler, SchedulerStep};
pub use synthetic::SyntheticClassifier;

/// Probability that the frame shows an active emergency vehicle with a lit bulb.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ClassifierOutput(f64);

impl ClassifierOutput {
    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub fn new(p: f64) -> Self {
        Self(if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) })
    }

    pub fn probability(self) -> f64 {
        self.0
    }

    pub fn is_positive(self, threshold: f64) -> bool {
        self.0 >= threshold
    }
}

/// Ground truth handed to classifiers that simulate their errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTruth {
    pub positive: bool,
    pub confounder_lit: bool,
    pub crop_side: f64,
}

impl FrameTruth {
    pub fn of(rec: &FrameRecord) -> Self {
        Self {
            positive: rec.label(),
            confounder_lit: rec.confounder_lit,
            crop_side: rec.crop.side,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifierInput<'a> {
    pub patch: Option<&'a ImagePatch>,
    pub truth: Option<FrameTruth>,
    /// Key for any randomness, unique per (track, frame).
    pub stream: u64,
}

pub trait Classifier: Send + Sync {
    /// Whether [`classify`](Classifier::classify) reads the image patch.
    /// Callers may skip patch extraction when this is false.
    fn needs_patch(&self) -> bool;

    fn classify(&self, input: &ClassifierInput<'_>) -> Result<ClassifierOutput, ClassifierError>;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("model is not trained")]
    ModelNotTrained,
    #[error("classifier needs an image patch")]
    MissingPatch,
    #[error("classifier needs ground truth")]
    MissingTruth,
    #[error("training set needs both classes (positives {positives}, negatives {negatives})")]
    DegenerateDataset { positives: usize, negatives: usize },
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("feature schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: u32, found: u32 },
    #[error("cannot render patch: {0}")]
    Render(String),
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

/// Renders each record's patch and extracts its features, paired with the
/// frame label. Records with invalid crops are skipped.
pub fn featurize_records<'a, I>(records: I, render_seed: u64, params: &RenderParams) -> Vec<(FeatureVector, bool)>
where
    I: IntoIterator<Item = &'a FrameRecord>,
{
    records
        .into_iter()
        .filter_map(|r| {
            let patch = render_patch_with(r, render_seed, params).ok()?;
            Some((extract_features(&patch), r.label()))
        })
        .collect()
}

/// Scores a record, rendering its patch only when the classifier asks for one.
pub fn classify_record(
    clf: &dyn Classifier,
    rec: &FrameRecord,
    render_seed: u64,
    params: &RenderParams,
) -> Result<ClassifierOutput, ClassifierError> {
    let patch = if clf.needs_patch() {
        Some(render_patch_with(rec, render_seed, params).map_err(|e| ClassifierError::Render(e.to_string()))?)
    } else {
        None
    };
    clf.classify(&ClassifierInput {
        patch: patch.as_ref(),
        truth: Some(FrameTruth::of(rec)),
        stream: rec.render_key(),
    })
}

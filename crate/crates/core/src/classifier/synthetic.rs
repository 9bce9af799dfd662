//! Noise-model classifier over ground-truth labels.
//!
//! Fires on positive frames with a true-positive rate that falls linearly
//! from `tpr_near` (crop side at or above `near_side`) to `tpr_far` (crop
//! side at or below `far_side`), and on negative frames with `fpr`, or
//! `confounder_fpr` when a confounding light is lit. Every draw is keyed by
//! the caller's stream id so results are reproducible.

use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError, ClassifierInput, ClassifierOutput};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticClassifier {
    pub tpr_near: f64,
    pub tpr_far: f64,
    pub near_side: f64,
    pub far_side: f64,
    pub fpr: f64,
    pub confounder_fpr: f64,
    /// Spread of scores away from 0 / 1, in `[0, 1]`. Zero gives hard
    /// `{0, 1}` outputs.
    pub score_jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticClassifier {
    fn default() -> Self {
        Self {
            tpr_near: 0.97,
            tpr_far: 0.65,
            near_side: 120.0,
            far_side: 18.0,
            fpr: 0.05,
            confounder_fpr: 0.3,
            score_jitter: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticClassifier {
    /// Always right: fires exactly on positive frames.
    pub fn oracle() -> Self {
        Self {
            tpr_near: 1.0,
            tpr_far: 1.0,
            fpr: 0.0,
            confounder_fpr: 0.0,
            ..Default::default()
        }
    }

    pub fn with_rates(tpr: f64, fpr: f64) -> Self {
        Self {
            tpr_near: tpr,
            tpr_far: tpr,
            fpr,
            confounder_fpr: fpr,
            ..Default::default()
        }
    }

    pub fn tpr_at(&self, crop_side: f64) -> f64 {
        if self.near_side <= self.far_side {
            return self.tpr_near;
        }
        let t = ((crop_side - self.far_side) / (self.near_side - self.far_side)).clamp(0.0, 1.0);
        self.tpr_far + t * (self.tpr_near - self.tpr_far)
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        for (name, v) in [
            ("tpr_near", self.tpr_near),
            ("tpr_far", self.tpr_far),
            ("fpr", self.fpr),
            ("confounder_fpr", self.confounder_fpr),
            ("score_jitter", self.score_jitter),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ClassifierError::InvalidConfig(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

impl Classifier for SyntheticClassifier {
    fn needs_patch(&self) -> bool {
        false
    }

    fn classify(&self, input: &ClassifierInput<'_>) -> Result<ClassifierOutput, ClassifierError> {
        let truth = input.truth.ok_or(ClassifierError::MissingTruth)?;
        let rate = if truth.positive {
            self.tpr_at(truth.crop_side)
        } else if truth.confounder_lit {
            self.confounder_fpr
        } else {
            self.fpr
        };
        let key = rng::mix(&[self.seed, input.stream]);
        let fire = rng::unit(key) < rate;
        let spread = 0.5 * self.score_jitter * rng::unit(key ^ 0x5C0E);
        let p = if fire { 1.0 - spread } else { spread };
        Ok(ClassifierOutput::new(p))
    }
}

//! Trainable per-frame classifier: one linear layer over standardized
//! [`FeatureVector`]s with a sigmoid output, trained on mean focal loss by
//! Adam under a reduce-on-plateau schedule.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureVector, FEATURE_LEN, FEATURE_SCHEMA_VERSION};
use super::focal::{focal_loss, focal_loss_grad_logit, sigmoid};
use super::optim::{Adam, AdamConfig};
use super::scheduler::{PlateauConfig, PlateauScheduler};
use super::{Classifier, ClassifierError, ClassifierInput, ClassifierOutput};
use crate::rng;

pub const MODEL_FORMAT: &str = "evdet-feature-classifier";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub initial_lr: f64,
    pub weight_decay: f64,
    pub plateau_patience: u32,
    pub lr_decay_factor: f64,
    pub stop_lr: f64,
    /// Smallest drop of the best loss that counts as an improvement.
    pub min_improvement: f64,
    pub seed: u64,
    /// Zero trains on the full batch every iteration.
    pub batch_size: usize,
    pub max_iterations: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            initial_lr: 1e-4,
            weight_decay: 0.0,
            plateau_patience: 200,
            lr_decay_factor: 0.5,
            stop_lr: 1e-6,
            min_improvement: 1e-6,
            seed: 0,
            batch_size: 0,
            max_iterations: 200_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must be in [0, 1]");
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma must be non-negative");
        }
        if !(self.initial_lr > 0.0 && self.stop_lr > 0.0 && self.stop_lr < self.initial_lr) {
            return bad("need 0 < stop_lr < initial_lr");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return bad("lr_decay_factor must be in (0, 1)");
        }
        if self.weight_decay < 0.0 || self.min_improvement < 0.0 {
            return bad("weight_decay and min_improvement must be non-negative");
        }
        Ok(())
    }

    pub fn plateau(&self) -> PlateauConfig {
        PlateauConfig {
            initial_lr: self.initial_lr,
            patience: self.plateau_patience,
            decay_factor: self.lr_decay_factor,
            stop_lr: self.stop_lr,
            min_improvement: self.min_improvement,
        }
    }
}

/// Per-feature standardization fitted on the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; FEATURE_LEN],
            std: vec![1.0; FEATURE_LEN],
        }
    }

    pub fn fit(features: &[FeatureVector]) -> Self {
        let n = features.len().max(1) as f64;
        let mut mean = vec![0.0; FEATURE_LEN];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f.0) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; FEATURE_LEN];
        for f in features {
            for ((s, v), m) in var.iter_mut().zip(f.0).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-9 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, f: &FeatureVector) -> [f64; FEATURE_LEN] {
        std::array::from_fn(|i| (f.0[i] - self.mean[i]) / self.std[i])
    }
}

/// Mean focal loss of a linear-sigmoid model plus an optional L2 penalty.
/// Parameters are laid out as `[w_0, .., w_{n-1}, bias]`.
pub struct TrainingObjective {
    xs: Vec<[f64; FEATURE_LEN]>,
    ys: Vec<bool>,
    alpha: f64,
    gamma: f64,
    weight_decay: f64,
}

impl TrainingObjective {
    pub fn new(samples: &[(FeatureVector, bool)], normalizer: &Normalizer, cfg: &TrainConfig) -> Self {
        Self {
            xs: samples.iter().map(|(f, _)| normalizer.apply(f)).collect(),
            ys: samples.iter().map(|(_, y)| *y).collect(),
            alpha: cfg.alpha,
            gamma: cfg.gamma,
            weight_decay: cfg.weight_decay,
        }
    }

    pub const N_PARAMS: usize = FEATURE_LEN + 1;

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    #[inline]
    fn logit(params: &[f64], x: &[f64; FEATURE_LEN]) -> f64 {
        let mut z = params[FEATURE_LEN];
        for i in 0..FEATURE_LEN {
            z += params[i] * x[i];
        }
        z
    }

    fn penalty(&self, params: &[f64]) -> f64 {
        0.5 * self.weight_decay * params[..FEATURE_LEN].iter().map(|w| w * w).sum::<f64>()
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        self.value_on(params, None)
    }

    fn value_on(&self, params: &[f64], batch: Option<&[usize]>) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        let mut visit = |i: usize| {
            let p = sigmoid(Self::logit(params, &self.xs[i]));
            total += focal_loss(p, self.ys[i], self.alpha, self.gamma);
            count += 1;
        };
        match batch {
            Some(idx) => idx.iter().copied().for_each(&mut visit),
            None => (0..self.len()).for_each(&mut visit),
        }
        total / count.max(1) as f64 + self.penalty(params)
    }

    /// Loss and gradient over the full set.
    pub fn value_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        self.value_and_grad_on(params, grad, None)
    }

    fn value_and_grad_on(&self, params: &[f64], grad: &mut [f64], batch: Option<&[usize]>) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        let mut count = 0usize;
        let mut visit = |i: usize| {
            let x = &self.xs[i];
            let z = Self::logit(params, x);
            total += focal_loss(sigmoid(z), self.ys[i], self.alpha, self.gamma);
            let dz = focal_loss_grad_logit(z, self.ys[i], self.alpha, self.gamma);
            for k in 0..FEATURE_LEN {
                grad[k] += dz * x[k];
            }
            grad[FEATURE_LEN] += dz;
            count += 1;
        };
        match batch {
            Some(idx) => idx.iter().copied().for_each(&mut visit),
            None => (0..self.len()).for_each(&mut visit),
        }
        let inv = 1.0 / count.max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        for k in 0..FEATURE_LEN {
            grad[k] += self.weight_decay * params[k];
        }
        total * inv + self.penalty(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_lr: f64,
    pub lr_decays: u32,
    /// True when the schedule's stopping rule ended training, false when
    /// the iteration cap did.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureClassifier {
    pub format: String,
    pub feature_schema_version: u32,
    pub model_version: u32,
    pub parent_version: Option<u32>,
    /// Empty until trained.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub normalizer: Normalizer,
    pub train_config: TrainConfig,
    /// Scene ids whose records were used for training.
    pub training_scenes: Vec<String>,
}

impl Default for FeatureClassifier {
    fn default() -> Self {
        Self::untrained()
    }
}

impl FeatureClassifier {
    pub fn untrained() -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            feature_schema_version: FEATURE_SCHEMA_VERSION,
            model_version: 0,
            parent_version: None,
            weights: Vec::new(),
            bias: 0.0,
            normalizer: Normalizer::identity(),
            train_config: TrainConfig::default(),
            training_scenes: Vec::new(),
        }
    }

    pub fn is_trained(&self) -> bool {
        self.weights.len() == FEATURE_LEN
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    /// Trains from scratch on `(features, label)` pairs.
    pub fn fit(samples: &[(FeatureVector, bool)], cfg: &TrainConfig) -> Result<(Self, TrainReport), ClassifierError> {
        cfg.validate()?;
        let positives = samples.iter().filter(|(_, y)| *y).count();
        let negatives = samples.len() - positives;
        if positives == 0 || negatives == 0 {
            return Err(ClassifierError::DegenerateDataset { positives, negatives });
        }
        if let Some(bad) = samples.iter().position(|(f, _)| !f.is_finite()) {
            return Err(ClassifierError::InvalidConfig(format!(
                "sample {bad} has non-finite features"
            )));
        }
        let feats: Vec<FeatureVector> = samples.iter().map(|(f, _)| *f).collect();
        let normalizer = Normalizer::fit(&feats);
        let objective = TrainingObjective::new(samples, &normalizer, cfg);

        let mut params = vec![0.0; TrainingObjective::N_PARAMS];
        // start from the class prior
        let prior = positives as f64 / samples.len() as f64;
        params[FEATURE_LEN] = (prior / (1.0 - prior)).ln();

        let mut adam = Adam::new(params.len(), AdamConfig::default());
        let mut sched = PlateauScheduler::new(cfg.plateau());
        let mut grad = vec![0.0; params.len()];
        let mut order: Vec<usize> = (0..objective.len()).collect();
        let mut shuffle = rng::stream(&[cfg.seed, 0x7EA1]);
        let batch = if cfg.batch_size == 0 || cfg.batch_size >= objective.len() {
            None
        } else {
            Some(cfg.batch_size)
        };
        let mut cursor = order.len();

        let initial_loss = objective.value(&params);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < cfg.max_iterations {
            let loss = match batch {
                None => objective.value_and_grad(&params, &mut grad),
                Some(b) => {
                    if cursor + b > order.len() {
                        order.shuffle(&mut shuffle);
                        cursor = 0;
                    }
                    let idx = &order[cursor..cursor + b];
                    cursor += b;
                    objective.value_and_grad_on(&params, &mut grad, Some(idx))
                }
            };
            let step = sched.step(loss);
            if step.stop {
                converged = true;
                break;
            }
            adam.step(&mut params, &grad, step.lr);
            iterations += 1;
        }
        let final_loss = objective.value(&params);
        let bias = params.pop().expect("bias");
        Ok((
            Self {
                weights: params,
                bias,
                normalizer,
                train_config: *cfg,
                ..Self::untrained()
            },
            TrainReport {
                iterations,
                initial_loss,
                final_loss,
                final_lr: sched.lr(),
                lr_decays: sched.decays(),
                converged,
            },
        ))
    }

    pub fn score_features(&self, f: &FeatureVector) -> Result<f64, ClassifierError> {
        if !self.is_trained() {
            return Err(ClassifierError::ModelNotTrained);
        }
        let x = self.normalizer.apply(f);
        let z = self.bias + self.weights.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
        Ok(sigmoid(z))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            feature_schema_version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| ClassifierError::Parse(e.to_string()))?;
        if header.format != MODEL_FORMAT {
            return Err(ClassifierError::Parse(format!("unknown model format {:?}", header.format)));
        }
        if header.feature_schema_version != FEATURE_SCHEMA_VERSION {
            return Err(ClassifierError::SchemaMismatch {
                expected: FEATURE_SCHEMA_VERSION,
                found: header.feature_schema_version,
            });
        }
        let model: Self = serde_json::from_str(text).map_err(|e| ClassifierError::Parse(e.to_string()))?;
        if !model.weights.is_empty() && model.weights.len() != FEATURE_LEN {
            return Err(ClassifierError::Parse(format!(
                "expected {FEATURE_LEN} weights, found {}",
                model.weights.len()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| ClassifierError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClassifierError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl Classifier for FeatureClassifier {
    fn needs_patch(&self) -> bool {
        true
    }

    fn classify(&self, input: &ClassifierInput<'_>) -> Result<ClassifierOutput, ClassifierError> {
        if !self.is_trained() {
            return Err(ClassifierError::ModelNotTrained);
        }
        let patch = input.patch.ok_or(ClassifierError::MissingPatch)?;
        Ok(ClassifierOutput::new(self.score_features(&extract_features(patch))?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> Vec<(FeatureVector, bool)> {
        use rand::Rng;
        let mut r = rng::stream(&[seed]);
        (0..n)
            .map(|i| {
                let y = i % 4 == 0;
                let mut f = [0.0; FEATURE_LEN];
                f[0] = if y {
                    r.random_range(0.7..1.0)
                } else {
                    r.random_range(0.0..0.6)
                };
                f[1] = r.random_range(0.0..1.0);
                (FeatureVector(f), y)
            })
            .collect()
    }

    fn fast_cfg() -> TrainConfig {
        TrainConfig {
            initial_lr: 0.05,
            plateau_patience: 50,
            stop_lr: 1e-4,
            max_iterations: 20_000,
            ..Default::default()
        }
    }

    #[test]
    fn separable_toy_set_reaches_low_loss() {
        let (model, report) = FeatureClassifier::fit(&toy(400, 1), &fast_cfg()).unwrap();
        assert!(report.final_loss < 0.05, "{report:?}");
        assert!(report.final_loss < report.initial_loss);
        let correct = toy(400, 2)
            .iter()
            .filter(|(f, y)| (model.score_features(f).unwrap() >= 0.5) == *y)
            .count();
        assert!(correct as f64 / 400.0 >= 0.95);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy(200, 3);
        let cfg = TrainConfig {
            batch_size: 32,
            ..fast_cfg()
        };
        let (a, _) = FeatureClassifier::fit(&data, &cfg).unwrap();
        let (b, _) = FeatureClassifier::fit(&data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_degenerate() {
        let data: Vec<_> = toy(40, 4).into_iter().filter(|(_, y)| !*y).collect();
        assert!(matches!(
            FeatureClassifier::fit(&data, &fast_cfg()),
            Err(ClassifierError::DegenerateDataset { positives: 0, .. })
        ));
    }

    #[test]
    fn untrained_model_refuses_to_classify() {
        let m = FeatureClassifier::untrained();
        assert!(matches!(
            m.score_features(&FeatureVector([0.0; FEATURE_LEN])),
            Err(ClassifierError::ModelNotTrained)
        ));
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let (m, _) = FeatureClassifier::fit(&toy(100, 5), &fast_cfg()).unwrap();
        let back = FeatureClassifier::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        let tampered = m.to_json().replace(
            &format!("\"feature_schema_version\": {FEATURE_SCHEMA_VERSION}"),
            "\"feature_schema_version\": 99",
        );
        assert!(matches!(
            FeatureClassifier::from_json(&tampered),
            Err(ClassifierError::SchemaMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = TrainConfig {
            stop_lr: 1.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(ClassifierError::InvalidConfig(_))));
    }
}

//! Sectioned TOML configuration shared by every command.
//!
//! ```toml
//! seed = 7
//!
//! [camera]
//! focal_u = 1000.0
//! image_width = 1920
//!
//! [scene]
//! actor_count = 500
//! confounder_fraction = 0.05
//!
//! [crop]
//! min_width = 18.0
//! patch_size = 64
//!
//! [render]
//! noise_amplitude = 0.15
//!
//! [smoother]
//! threshold = 0.5
//!
//! [classifier]
//! kind = "feature"
//! model = "model.json"
//!
//! [train]
//! initial_lr = 0.05
//!
//! [augment]
//! positive_ratio = 2
//! negative_downsample = 5
//!
//! [bench]
//! tracks_per_frame = 200
//! frames = 1000
//! budget_ms = 10.0
//! ```
//!
//! Every section and every key is optional; missing values take their
//! defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::AugmentConfig;
use crate::classifier::{SyntheticClassifier, TrainConfig};
use crate::data_engine::MiningMode;
use crate::geometry::{CameraModel, DEFAULT_MIN_WIDTH, DEFAULT_PATCH_SIZE};
use crate::simulator::{RenderParams, SceneConfig, SplitRatio};
use crate::smoother::SmootherConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropSection {
    pub min_width: f64,
    pub patch_size: usize,
}

impl Default for CropSection {
    fn default() -> Self {
        Self {
            min_width: DEFAULT_MIN_WIDTH,
            patch_size: DEFAULT_PATCH_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub noise_amplitude: f32,
    /// Extra key mixed into every rendered patch.
    pub seed: u64,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            noise_amplitude: RenderParams::default().noise_amplitude,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    Feature,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub kind: ClassifierKind,
    /// Model file for the feature classifier.
    pub model: Option<PathBuf>,
    pub synthetic: SyntheticClassifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub tracks_per_frame: usize,
    pub frames: usize,
    pub budget_ms: f64,
    /// Worker threads for the per-frame fan-out; 1 runs inline.
    pub threads: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            tracks_per_frame: 200,
            frames: 1000,
            budget_ms: 10.0,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataEngineSection {
    pub mining_mode: MiningMode,
    pub split_train: u32,
    pub split_test: u32,
}

impl Default for DataEngineSection {
    fn default() -> Self {
        let r = SplitRatio::default();
        Self {
            mining_mode: MiningMode::default(),
            split_train: r.train,
            split_test: r.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub camera: CameraModel,
    pub scene: SceneConfig,
    pub crop: CropSection,
    pub render: RenderSection,
    pub smoother: SmootherConfig,
    pub classifier: ClassifierSection,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub data_engine: DataEngineSection,
    pub bench: BenchSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file. Relative file references are
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if let (Some(m), Some(dir)) = (&cfg.classifier.model, path.parent()) {
            if m.is_relative() {
                cfg.classifier.model = Some(dir.join(m));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: String| ConfigError::Invalid(e);
        self.camera.validate().map_err(|e| inv(e.to_string()))?;
        self.scene.validate().map_err(|e| inv(e.to_string()))?;
        self.smoother.validate().map_err(|e| inv(e.to_string()))?;
        self.train.validate().map_err(|e| inv(e.to_string()))?;
        self.augment.validate().map_err(|e| inv(e.to_string()))?;
        self.classifier.synthetic.validate().map_err(|e| inv(e.to_string()))?;
        if self.crop.patch_size == 0 {
            return Err(inv("crop.patch_size must be positive".into()));
        }
        if !(self.crop.min_width >= 0.0) {
            return Err(inv("crop.min_width must be non-negative".into()));
        }
        if self.data_engine.split_train == 0 {
            return Err(inv("data_engine.split_train must be positive".into()));
        }
        if self.bench.threads == 0 {
            return Err(inv("bench.threads must be positive".into()));
        }
        if let Some(m) = &self.classifier.model {
            if !m.exists() {
                return Err(inv(format!("classifier.model {} does not exist", m.display())));
            }
        }
        Ok(())
    }

    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            patch_size: self.crop.patch_size,
            noise_amplitude: self.render.noise_amplitude,
        }
    }

    pub fn split_ratio(&self) -> SplitRatio {
        SplitRatio {
            train: self.data_engine.split_train,
            test: self.data_engine.split_test,
        }
    }
}

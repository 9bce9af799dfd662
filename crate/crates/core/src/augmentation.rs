//! Bounding-box augmentation for the rare positive class and train-set
//! rebalancing.
//!
//! Positive boxes are resampled from independent per-field normals fitted
//! on the positive training states; the crop is recomputed at the sampled
//! box, so the augmented patch is rendered at a new size and position while
//! every label field is copied unchanged.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{crop_region, CameraModel, TrackState};
use crate::rng;
use crate::simulator::{FrameRecord, Provenance};

pub const MAX_DIMENSION_DRAWS: usize = 100;
/// Attempts at finding an augmented box whose crop survives the geometry
/// filters before falling back to the original box.
pub const MAX_PLACEMENT_DRAWS: usize = 100;

pub const FIELD_NAMES: [&str; 6] = ["center_x", "center_y", "center_z", "length", "width", "height"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("need at least 2 tracks to fit, got {0}")]
    InsufficientData(usize),
    #[error("no positive dimension after {MAX_DIMENSION_DRAWS} draws")]
    SamplingFailure,
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldNormal {
    pub mean: f64,
    pub std: f64,
}

/// Independent normals over `FIELD_NAMES`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    pub fields: [FieldNormal; 6],
    pub sample_count: usize,
}

fn fields_of(t: &TrackState) -> [f64; 6] {
    [t.center_x, t.center_y, t.center_z, t.length, t.width, t.height]
}

pub fn fit_state_distribution(states: &[TrackState]) -> Result<StateDistribution, AugmentError> {
    let n = states.len();
    if n < 2 {
        return Err(AugmentError::InsufficientData(n));
    }
    let mut mean = [0.0; 6];
    for s in states {
        for (m, v) in mean.iter_mut().zip(fields_of(s)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut ss = [0.0; 6];
    for s in states {
        for ((acc, v), m) in ss.iter_mut().zip(fields_of(s)).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let fields = std::array::from_fn(|i| FieldNormal {
        mean: mean[i],
        std: (ss[i] / (n - 1) as f64).sqrt(),
    });
    Ok(StateDistribution { fields, sample_count: n })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledBox {
    pub center_x: f64,
    pub center_y: f64,
    pub center_z: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl SampledBox {
    pub fn apply_to(&self, t: &TrackState) -> TrackState {
        TrackState {
            center_x: self.center_x,
            center_y: self.center_y,
            center_z: self.center_z,
            length: self.length,
            width: self.width,
            height: self.height,
            ..*t
        }
    }
}

fn draw<R: Rng>(r: &mut R, f: FieldNormal) -> f64 {
    if f.std == 0.0 {
        return f.mean;
    }
    let z: f64 = r.sample(rand_distr::StandardNormal);
    f.mean + f.std * z
}

pub fn sample_augmented_box(dist: &StateDistribution, seed: u64) -> Result<SampledBox, AugmentError> {
    let mut r = rng::stream(&[seed, 0xA06]);
    let [cx, cy, cz, l, w, h] = dist.fields;
    let center = (draw(&mut r, cx), draw(&mut r, cy), draw(&mut r, cz));
    let mut dim = |f: FieldNormal| {
        (0..MAX_DIMENSION_DRAWS)
            .map(|_| draw(&mut r, f))
            .find(|v| *v > 0.0)
            .ok_or(AugmentError::SamplingFailure)
    };
    Ok(SampledBox {
        center_x: center.0,
        center_y: center.1,
        center_z: center.2,
        length: dim(l)?,
        width: dim(w)?,
        height: dim(h)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Output copies per positive record, the original included.
    pub positive_ratio: u32,
    /// Keep one negative in this many.
    pub negative_downsample: u32,
    pub min_width: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            positive_ratio: 2,
            negative_downsample: 5,
            min_width: crate::geometry::DEFAULT_MIN_WIDTH,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.positive_ratio == 0 || self.negative_downsample == 0 {
            return Err(AugmentError::InvalidConfig("ratios must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSetReport {
    pub positives_in: usize,
    pub negatives_in: usize,
    pub positives_out: usize,
    pub negatives_out: usize,
    /// Augmented copies that kept the original box because no sampled box
    /// produced a valid crop, or the positives were too few to fit.
    pub fallback_copies: usize,
    pub distribution: Option<StateDistribution>,
}

/// Finds an augmented variant of `rec` with a valid crop.
fn augment_record(
    rec: &FrameRecord,
    dist: &StateDistribution,
    camera: &CameraModel,
    cfg: &AugmentConfig,
    seed: u64,
) -> Option<FrameRecord> {
    (0..MAX_PLACEMENT_DRAWS as u64).find_map(|attempt| {
        let sampled = sample_augmented_box(dist, rng::mix(&[seed, attempt])).ok()?;
        let state = sampled.apply_to(&rec.state);
        let crop = crop_region(camera, &state, cfg.min_width);
        crop.valid.then(|| FrameRecord {
            state,
            crop,
            score: None,
            provenance: Provenance::Augmented {
                source_frame: rec.frame_index,
            },
            ..rec.clone()
        })
    })
}

/// Rebalances a training set.
///
/// Every positive appears `positive_ratio` times: the original plus
/// augmented copies. Negatives are split into `negative_downsample` folds by
/// a permutation keyed on `seed / negative_downsample`, and the fold
/// `seed % negative_downsample` is kept, so each seed keeps a uniformly
/// random 1/k subset and k consecutive seeds cover every negative once.
pub fn build_train_set(
    records: &[FrameRecord],
    camera: &CameraModel,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<(Vec<FrameRecord>, TrainSetReport), AugmentError> {
    cfg.validate()?;
    let (positives, negatives): (Vec<&FrameRecord>, Vec<&FrameRecord>) = records.iter().partition(|r| r.label());
    let states: Vec<TrackState> = positives.iter().map(|r| r.state).collect();
    let dist = fit_state_distribution(&states).ok();

    let mut out = Vec::with_capacity(positives.len() * cfg.positive_ratio as usize + negatives.len() / 2);
    let mut fallback_copies = 0;
    for rec in &positives {
        out.push((*rec).clone());
        for copy in 1..cfg.positive_ratio {
            let key = rng::mix(&[seed, rec.render_key(), copy as u64]);
            let aug = dist.as_ref().and_then(|d| augment_record(rec, d, camera, cfg, key));
            out.push(aug.unwrap_or_else(|| {
                fallback_copies += 1;
                FrameRecord {
                    score: None,
                    provenance: Provenance::Augmented {
                        source_frame: rec.frame_index,
                    },
                    ..(*rec).clone()
                }
            }));
        }
    }
    let positives_out = out.len();

    let k = cfg.negative_downsample as u64;
    let mut order: Vec<usize> = (0..negatives.len()).collect();
    order.shuffle(&mut rng::stream(&[seed / k, 0xD0E5]));
    let fold = (seed % k) as usize;
    let mut kept: Vec<usize> = order
        .iter()
        .enumerate()
        .filter(|(rank, _)| rank % k as usize == fold)
        .map(|(_, &i)| i)
        .collect();
    kept.sort_unstable();
    out.extend(kept.iter().map(|&i| negatives[i].clone()));

    let report = TrainSetReport {
        positives_in: positives.len(),
        negatives_in: negatives.len(),
        positives_out,
        negatives_out: kept.len(),
        fallback_copies,
        distribution: dist,
    };
    Ok((out, report))
}

//! Synthetic driving scenes with flashing-light ground truth.
//!
//! Class priors, activeness and bulb-state statistics default to the
//! fleet data-set summary (EV 3.4%, police/fire/ambulance 80.0/13.4/6.6%,
//! 90% of EVs active, 8.2% of active frames with every bulb off, tracks of
//! at most 25 s). Tracks move in straight lines at constant velocity in the
//! camera frame.

mod flash;
mod render;
mod split;

pub use flash::{Bulb, FlashMode, FlashPattern, PERIOD_RANGE};
pub use render::{
    background_frame, render_frame, render_patch, render_patch_with, RenderParams, BACKGROUND_CEILING, BRIGHT_LEVEL,
};
pub use split::{assign_split, split_dataset, SplitRatio};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{crop_region, wrap_angle, CameraModel, CropRegion, Point3, TrackId, TrackState};
use crate::rng;

/// Upper bound on a track's duration in seconds.
pub const MAX_TRACK_SECONDS: f64 = 25.0;

/// Camera height above the road; tracks sit on the ground plane `y = CAMERA_HEIGHT`.
pub const CAMERA_HEIGHT: f64 = 1.6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("cannot render record {track_id}@{frame_index}: crop region is invalid")]
    InvalidRegion { track_id: TrackId, frame_index: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleType {
    Police,
    Fire,
    Ambulance,
    NonEv,
}

impl VehicleType {
    pub fn is_ev(self) -> bool {
        !matches!(self, VehicleType::NonEv)
    }
}

/// Non-EV light sources that resemble beacons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfounderKind {
    /// Pair of red lights low on the vehicle.
    BrakeLights,
    /// Amber roof beacon, e.g. a construction vehicle.
    AmberBeacon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Where a record came from. Mined and augmented records stay auditable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    #[default]
    Simulated,
    Augmented {
        source_frame: u64,
    },
    Mined {
        model_version: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

/// Straight-line constant-velocity path in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_frame: u64,
    pub frame_count: u64,
    /// Box center at `start_frame`, meters.
    pub start: Point3,
    /// Meters per second.
    pub velocity: Point3,
    pub yaw: f64,
}

impl Trajectory {
    pub fn duration(&self, frame_rate: f64) -> f64 {
        self.frame_count as f64 / frame_rate
    }

    pub fn position(&self, frame_offset: u64, frame_rate: f64) -> Point3 {
        let t = frame_offset as f64 / frame_rate;
        Point3::new(
            self.start.x + self.velocity.x * t,
            self.start.y + self.velocity.y * t,
            self.start.z + self.velocity.z * t,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorProfile {
    pub scene_id: String,
    pub track_id: TrackId,
    pub vehicle_type: VehicleType,
    pub is_active: bool,
    /// Present for active EVs only.
    pub bulb_pattern: Option<FlashPattern>,
    pub confounder: Option<ConfounderKind>,
    pub trajectory: Trajectory,
    pub dims: Dims,
}

impl ActorProfile {
    pub fn state_at(&self, frame_offset: u64, frame_rate: f64) -> TrackState {
        let p = self.trajectory.position(frame_offset, frame_rate);
        TrackState {
            track_id: self.track_id,
            timestamp: (self.trajectory.start_frame + frame_offset) as f64 / frame_rate,
            center_x: p.x,
            center_y: p.y,
            center_z: p.z,
            length: self.dims.length,
            width: self.dims.width,
            height: self.dims.height,
            yaw: self.trajectory.yaw,
        }
    }
}

/// Ground truth and bookkeeping for one track in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub scene_id: String,
    pub track_id: TrackId,
    pub frame_index: u64,
    /// Seconds.
    pub timestamp: f64,
    pub vehicle_type: VehicleType,
    pub is_active: bool,
    pub bulb_on: bool,
    /// Bitmask of lit beacon bulbs; zero whenever `bulb_on` is false.
    pub lit_bulbs: u8,
    pub confounder: Option<ConfounderKind>,
    pub confounder_lit: bool,
    /// Scene illumination scalar (1 = day).
    pub ambient: f64,
    pub state: TrackState,
    pub crop: CropRegion,
    pub score: Option<f64>,
    pub split: Option<Split>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl FrameRecord {
    /// Training label: an EV with a lit beacon at capture time.
    pub fn label(&self) -> bool {
        self.vehicle_type.is_ev() && self.is_active && self.bulb_on
    }

    pub fn actor_key(&self) -> (String, TrackId) {
        (self.scene_id.clone(), self.track_id)
    }

    /// Seed key identifying this record's appearance.
    pub fn render_key(&self) -> u64 {
        rng::mix(&[rng::hash_str(&self.scene_id), self.track_id.0, self.frame_index])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub scene_id: String,
    pub actor_count: usize,
    /// Hz.
    pub frame_rate: f64,
    pub ev_fraction: f64,
    pub police_fraction: f64,
    pub fire_fraction: f64,
    pub ambulance_fraction: f64,
    pub active_fraction: f64,
    pub all_off_fraction: f64,
    pub flash_mode: FlashMode,
    pub bulb_count: usize,
    /// Fraction of non-EV actors carrying a confounding light source.
    pub confounder_fraction: f64,
    /// Per-frame probability a confounder is lit.
    pub confounder_duty: f64,
    pub min_duration: f64,
    pub max_duration: f64,
    /// Initial depth range, meters.
    pub min_depth: f64,
    pub max_depth: f64,
    /// Initial lateral offset is drawn from `[-lateral_range, lateral_range]`.
    pub lateral_range: f64,
    /// Maximum relative speed along the road, m/s.
    pub max_speed: f64,
    pub ambient_intensity: f64,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            scene_id: "scene-0".into(),
            actor_count: 1000,
            frame_rate: 10.0,
            ev_fraction: 0.034,
            police_fraction: 0.800,
            fire_fraction: 0.134,
            ambulance_fraction: 0.066,
            active_fraction: 0.900,
            all_off_fraction: 0.082,
            flash_mode: FlashMode::Periodic,
            bulb_count: 2,
            confounder_fraction: 0.05,
            confounder_duty: 0.7,
            min_duration: 2.0,
            max_duration: MAX_TRACK_SECONDS,
            min_depth: 6.0,
            max_depth: 120.0,
            lateral_range: 20.0,
            max_speed: 6.0,
            ambient_intensity: 1.0,
            noise_amplitude: 0.15,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        for (name, v) in [
            ("ev_fraction", self.ev_fraction),
            ("police_fraction", self.police_fraction),
            ("fire_fraction", self.fire_fraction),
            ("ambulance_fraction", self.ambulance_fraction),
            ("active_fraction", self.active_fraction),
            ("all_off_fraction", self.all_off_fraction),
            ("confounder_fraction", self.confounder_fraction),
            ("confounder_duty", self.confounder_duty),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        let type_sum = self.police_fraction + self.fire_fraction + self.ambulance_fraction;
        if (type_sum - 1.0).abs() > 1e-9 {
            return bad(format!("EV type fractions sum to {type_sum}, expected 1"));
        }
        if !(self.frame_rate > 0.0) {
            return bad("frame_rate must be positive".into());
        }
        if !(self.min_duration > 0.0 && self.min_duration <= self.max_duration) {
            return bad("need 0 < min_duration <= max_duration".into());
        }
        if self.max_duration > MAX_TRACK_SECONDS {
            return bad(format!("max_duration exceeds {MAX_TRACK_SECONDS} s"));
        }
        if !(self.min_depth > 0.0 && self.min_depth <= self.max_depth) {
            return bad("need 0 < min_depth <= max_depth".into());
        }
        if self.lateral_range < 0.0 || self.max_speed < 0.0 || self.noise_amplitude < 0.0 {
            return bad("ranges must be non-negative".into());
        }
        if !(self.ambient_intensity > 0.0) {
            return bad("ambient_intensity must be positive".into());
        }
        if self.bulb_count == 0 || self.bulb_count > 8 {
            return bad("bulb_count must be in 1..=8".into());
        }
        Ok(())
    }

    fn scene_frames(&self) -> u64 {
        (self.max_duration * self.frame_rate).round().max(1.0) as u64
    }
}

/// Streams actors and their frame records one at a time, so very large
/// scenes can be summarized without holding every record in memory.
#[derive(Debug, Clone)]
pub struct SceneGenerator {
    cfg: SceneConfig,
    camera: CameraModel,
    min_width: f64,
    pattern: FlashPattern,
    scene_key: u64,
}

impl SceneGenerator {
    pub fn new(cfg: SceneConfig, camera: CameraModel, min_width: f64) -> Result<Self, SimError> {
        cfg.validate()?;
        camera.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let pattern = match cfg.flash_mode {
            FlashMode::Periodic => FlashPattern::solve_periodic(cfg.all_off_fraction, cfg.bulb_count),
            FlashMode::Bernoulli => FlashPattern::bernoulli(cfg.all_off_fraction, cfg.bulb_count),
        };
        let scene_key = rng::mix(&[cfg.seed, rng::hash_str(&cfg.scene_id)]);
        Ok(Self {
            cfg,
            camera,
            min_width,
            pattern,
            scene_key,
        })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.cfg
    }

    /// The solved base flash pattern shared by all active actors (before phase).
    pub fn base_pattern(&self) -> &FlashPattern {
        &self.pattern
    }

    pub fn actor(&self, index: usize) -> ActorProfile {
        let cfg = &self.cfg;
        let mut r = rng::stream(&[self.scene_key, index as u64]);
        let is_ev = r.random::<f64>() < cfg.ev_fraction;
        let vehicle_type = if is_ev {
            let u: f64 = r.random();
            if u < cfg.police_fraction {
                VehicleType::Police
            } else if u < cfg.police_fraction + cfg.fire_fraction {
                VehicleType::Fire
            } else {
                VehicleType::Ambulance
            }
        } else {
            VehicleType::NonEv
        };
        let is_active = is_ev && r.random::<f64>() < cfg.active_fraction;
        let bulb_pattern = is_active.then(|| {
            let phase = r.random_range(0..self.pattern.period.max(1));
            self.pattern.clone().with_phase(phase)
        });
        let confounder = (!is_ev && r.random::<f64>() < cfg.confounder_fraction).then(|| {
            if r.random::<f64>() < 0.7 {
                ConfounderKind::BrakeLights
            } else {
                ConfounderKind::AmberBeacon
            }
        });

        let (l, w, h) = match vehicle_type {
            VehicleType::Police => (4.9, 1.9, 1.5),
            VehicleType::Fire => (9.5, 2.5, 3.2),
            VehicleType::Ambulance => (6.4, 2.2, 2.7),
            VehicleType::NonEv => {
                if r.random::<f64>() < 0.85 {
                    (4.6, 1.85, 1.5)
                } else {
                    (8.0, 2.4, 3.0)
                }
            }
        };
        let jitter = |r: &mut rand_chacha::ChaCha8Rng| 1.0 + r.random_range(-0.08..0.08);
        let dims = Dims {
            length: l * jitter(&mut r),
            width: w * jitter(&mut r),
            height: h * jitter(&mut r),
        };

        let scene_frames = cfg.scene_frames();
        let duration = r.random_range(cfg.min_duration..=cfg.max_duration);
        let frame_count = ((duration * cfg.frame_rate).floor() as u64).clamp(1, scene_frames);
        let start_frame = r.random_range(0..=scene_frames - frame_count);

        let start = Point3::new(
            r.random_range(-cfg.lateral_range..=cfg.lateral_range),
            CAMERA_HEIGHT - dims.height / 2.0,
            r.random_range(cfg.min_depth..=cfg.max_depth),
        );
        let velocity = Point3::new(
            r.random_range(-1.0..=1.0),
            0.0,
            r.random_range(-cfg.max_speed..=cfg.max_speed),
        );
        let heading = if r.random::<bool>() { 1.0 } else { -1.0 } * std::f64::consts::FRAC_PI_2;
        let yaw = wrap_angle(heading + r.random_range(-0.1..0.1));

        ActorProfile {
            scene_id: cfg.scene_id.clone(),
            track_id: TrackId(index as u64 + 1),
            vehicle_type,
            is_active,
            bulb_pattern,
            confounder,
            trajectory: Trajectory {
                start_frame,
                frame_count,
                start,
                velocity,
                yaw,
            },
            dims,
        }
    }

    pub fn frames(&self, actor: &ActorProfile) -> Vec<FrameRecord> {
        let cfg = &self.cfg;
        let actor_key = rng::mix(&[self.scene_key, actor.track_id.0]);
        (0..actor.trajectory.frame_count)
            .map(|offset| {
                let frame_index = actor.trajectory.start_frame + offset;
                let state = actor.state_at(offset, cfg.frame_rate);
                let lit_bulbs = actor.bulb_pattern.as_ref().map_or(0, |p| p.lit_bulbs(frame_index, actor_key));
                let confounder_lit =
                    actor.confounder.is_some() && rng::unit(rng::mix(&[actor_key, frame_index, 2])) < cfg.confounder_duty;
                FrameRecord {
                    scene_id: cfg.scene_id.clone(),
                    track_id: actor.track_id,
                    frame_index,
                    timestamp: state.timestamp,
                    vehicle_type: actor.vehicle_type,
                    is_active: actor.is_active,
                    bulb_on: lit_bulbs != 0,
                    lit_bulbs,
                    confounder: actor.confounder,
                    confounder_lit,
                    ambient: cfg.ambient_intensity,
                    crop: crop_region(&self.camera, &state, self.min_width),
                    state,
                    score: None,
                    split: None,
                    provenance: Provenance::Simulated,
                }
            })
            .collect()
    }

    /// Actors with their frames, in actor order.
    pub fn iter(&self) -> impl Iterator<Item = (ActorProfile, Vec<FrameRecord>)> + '_ {
        (0..self.cfg.actor_count).map(move |i| {
            let a = self.actor(i);
            let f = self.frames(&a);
            (a, f)
        })
    }
}

/// A generated scene: actor profiles and frame records in timestamp order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub actors: Vec<ActorProfile>,
    pub records: Vec<FrameRecord>,
}

pub fn generate_scene(cfg: &SceneConfig, camera: &CameraModel, min_width: f64) -> Result<Scene, SimError> {
    let generator = SceneGenerator::new(cfg.clone(), *camera, min_width)?;
    let mut actors = Vec::with_capacity(cfg.actor_count);
    let mut records = Vec::new();
    for (a, f) in generator.iter() {
        actors.push(a);
        records.extend(f);
    }
    sort_records(&mut records);
    Ok(Scene { actors, records })
}

/// Timestamp order, ties broken by scene then track id.
pub fn sort_records(records: &mut [FrameRecord]) {
    records.sort_by(|a, b| {
        a.frame_index
            .cmp(&b.frame_index)
            .then_with(|| a.scene_id.cmp(&b.scene_id))
            .then_with(|| a.track_id.cmp(&b.track_id))
    });
}

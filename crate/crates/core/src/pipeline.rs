//! Frame-by-frame orchestration: crop, patch, classify, smooth.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Classifier, ClassifierError, ClassifierInput, FrameTruth};
use crate::evaluation::{EvalError, EvalReport, DEFAULT_RECALL_TARGET};
use crate::geometry::{crop_region, extract_patch, CameraModel, FrameImage, ImagePatch, InvalidReason, TrackId, TrackState};
use crate::simulator::{render_patch_with, FrameRecord, RenderParams};
use crate::smoother::{SmootherConfig, SmootherError, TrackSmoother};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Smoother(#[from] SmootherError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid pipeline setup: {0}")]
    Setup(String),
}

/// Where image patches come from.
#[derive(Debug, Clone, Copy)]
pub enum PatchSource<'a> {
    /// Crop from a full camera frame.
    Frame(&'a FrameImage),
    /// Render each patch directly from the track's simulator record.
    Simulator { seed: u64 },
    /// No pixels available; only classifiers without patches can run.
    None,
}

#[derive(Debug, Clone, Copy)]
pub struct TrackInput<'a> {
    pub state: TrackState,
    /// Key for classifier randomness.
    pub stream: u64,
    pub truth: Option<FrameTruth>,
    /// Needed by [`PatchSource::Simulator`].
    pub record: Option<&'a FrameRecord>,
}

impl<'a> TrackInput<'a> {
    pub fn from_record(rec: &'a FrameRecord) -> Self {
        Self {
            state: rec.state,
            stream: rec.render_key(),
            truth: Some(FrameTruth::of(rec)),
            record: Some(rec),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FrameContext<'a> {
    pub frame_index: u64,
    pub patches: PatchSource<'a>,
}

/// Per-track output of one frame. `latency_ms` is wall-clock and is left
/// out of serialized decisions so that logs replay byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDecision {
    #[serde(default)]
    pub scene_id: String,
    pub track_id: TrackId,
    pub frame_index: u64,
    pub crop_valid: bool,
    pub invalid_reason: Option<InvalidReason>,
    pub score: Option<f64>,
    pub active: bool,
    pub buffer_frames: usize,
    pub buffer_positives: usize,
    /// Set when this track failed; other tracks in the frame are unaffected.
    pub error: Option<String>,
    #[serde(skip)]
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub camera: CameraModel,
    pub min_width: f64,
    pub render: RenderParams,
    pub smoother: SmootherConfig,
    /// Worker threads for per-track work; 1 runs inline.
    pub threads: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            min_width: crate::geometry::DEFAULT_MIN_WIDTH,
            render: RenderParams::default(),
            smoother: SmootherConfig::default(),
            threads: 1,
        }
    }
}

enum Stage {
    Scored(f64),
    Invalid(Option<InvalidReason>),
    Failed(String),
}

/// Stateful per-frame processor. Smoother state lives in memory, one
/// buffer per track id.
pub struct Pipeline {
    settings: PipelineSettings,
    classifier: Box<dyn Classifier>,
    store: HashMap<TrackId, TrackSmoother>,
    pool: Option<rayon::ThreadPool>,
}

impl Pipeline {
    pub fn new(settings: PipelineSettings, classifier: Box<dyn Classifier>) -> Result<Self, PipelineError> {
        settings.smoother.validate()?;
        settings.camera.validate().map_err(|e| PipelineError::Setup(e.to_string()))?;
        if settings.threads == 0 || settings.render.patch_size == 0 {
            return Err(PipelineError::Setup("threads and patch_size must be positive".into()));
        }
        let pool = if settings.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(settings.threads)
                    .build()
                    .map_err(|e| PipelineError::Setup(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            settings,
            classifier,
            store: HashMap::new(),
            pool,
        })
    }

    pub fn settings(&self) -> &PipelineSettings {
        &self.settings
    }

    pub fn tracked(&self) -> usize {
        self.store.len()
    }

    /// Forgets all smoother state.
    pub fn reset(&mut self) {
        self.store.clear();
    }

    fn stage(&self, input: &TrackInput<'_>, ctx: &FrameContext<'_>) -> Stage {
        if let Err(e) = input.state.validate() {
            return Stage::Failed(e.to_string());
        }
        let crop = crop_region(&self.settings.camera, &input.state, self.settings.min_width);
        if !crop.valid {
            return Stage::Invalid(crop.invalid_reason);
        }
        let patch: Option<ImagePatch> = if self.classifier.needs_patch() {
            let p = match ctx.patches {
                PatchSource::Frame(img) => extract_patch(img, &crop, self.settings.render.patch_size).map_err(|e| e.to_string()),
                PatchSource::Simulator { seed } => match input.record {
                    Some(rec) => {
                        let rec = FrameRecord {
                            state: input.state,
                            crop,
                            ..rec.clone()
                        };
                        render_patch_with(&rec, seed, &self.settings.render).map_err(|e| e.to_string())
                    }
                    None => Err("simulator patches need the track's record".into()),
                },
                PatchSource::None => Err(ClassifierError::MissingPatch.to_string()),
            };
            match p {
                Ok(p) => Some(p),
                Err(e) => return Stage::Failed(e),
            }
        } else {
            None
        };
        let truth = input.truth.map(|t| FrameTruth {
            crop_side: crop.side,
            ..t
        });
        match self.classifier.classify(&ClassifierInput {
            patch: patch.as_ref(),
            truth,
            stream: input.stream,
        }) {
            Ok(out) => Stage::Scored(out.probability()),
            Err(e) => Stage::Failed(e.to_string()),
        }
    }

    /// Processes one frame. Output order follows `tracks`. A track id seen
    /// twice in one frame is reported as an error on its later occurrences.
    pub fn process_frame(&mut self, scene_id: &str, tracks: &[TrackInput<'_>], ctx: &FrameContext<'_>) -> Vec<FrameDecision> {
        let timed = |i: &TrackInput<'_>| {
            let t0 = Instant::now();
            let s = self.stage(i, ctx);
            (s, t0.elapsed().as_secs_f64() * 1e3)
        };
        let staged: Vec<(Stage, f64)> = match &self.pool {
            Some(pool) => {
                use rayon::prelude::*;
                pool.install(|| tracks.par_iter().map(timed).collect())
            }
            None => tracks.iter().map(timed).collect(),
        };
        let mut seen = HashSet::with_capacity(tracks.len());
        let mut out = Vec::with_capacity(tracks.len());
        for (input, (stage, stage_ms)) in tracks.iter().zip(staged) {
            let t0 = Instant::now();
            let id = input.state.track_id;
            let stage = if seen.insert(id) {
                stage
            } else {
                Stage::Failed(format!("duplicate track {id} in frame"))
            };
            let (crop_valid, reason, score, error) = match stage {
                Stage::Scored(p) => (true, None, Some(p), None),
                Stage::Invalid(r) => (false, r, None, None),
                Stage::Failed(e) => (false, None, None, Some(e)),
            };
            let decision = match (score, self.store.get_mut(&id)) {
                (Some(p), Some(s)) => s.push_and_decide(Some(p)),
                (Some(p), None) => {
                    let mut s = TrackSmoother::new(self.settings.smoother).expect("validated at construction");
                    let d = s.push_and_decide(Some(p));
                    self.store.insert(id, s);
                    d
                }
                (None, Some(s)) => {
                    if error.is_none() {
                        s.push(None);
                    }
                    s.decide()
                }
                (None, None) => crate::smoother::SmoothedDecision {
                    active: false,
                    frames: 0,
                    positives: 0,
                },
            };
            out.push(FrameDecision {
                scene_id: scene_id.to_string(),
                track_id: id,
                frame_index: ctx.frame_index,
                crop_valid,
                invalid_reason: reason,
                score,
                active: decision.active,
                buffer_frames: decision.frames,
                buffer_positives: decision.positives,
                error,
                latency_ms: stage_ms + t0.elapsed().as_secs_f64() * 1e3,
            });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub frames: usize,
    pub mean_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    /// Sum of per-track contributions over the sum of frame wall-clock.
    pub track_share: f64,
}

impl LatencyStats {
    /// `frame_ms` are per-frame wall-clock times, `track_ms_total` the sum
    /// of all per-track contributions.
    pub fn from_samples(frame_ms: &[f64], track_ms_total: f64) -> Self {
        let n = frame_ms.len();
        if n == 0 {
            return Self {
                frames: 0,
                mean_ms: 0.0,
                p99_ms: 0.0,
                max_ms: 0.0,
                track_share: 0.0,
            };
        }
        let mut sorted = frame_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let total: f64 = sorted.iter().sum();
        // nearest-rank percentile
        let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            frames: n,
            mean_ms: total / n as f64,
            p99_ms: sorted[rank - 1],
            max_ms: sorted[n - 1],
            track_share: if total > 0.0 { track_ms_total / total } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub decisions: Vec<FrameDecision>,
    pub latency: LatencyStats,
    /// Input records with pipeline scores attached.
    pub scored: Vec<FrameRecord>,
    pub report: EvalReport,
}

/// Replays recorded scenes through `pipeline`, one scene at a time in
/// scene-id order and each scene in frame order. Smoother state is reset
/// between scenes.
pub fn run_log(
    pipeline: &mut Pipeline,
    records: &[FrameRecord],
    patches_seed: u64,
    name: &str,
) -> Result<RunOutput, PipelineError> {
    let mut frames: BTreeMap<(&str, u64), Vec<&FrameRecord>> = BTreeMap::new();
    for r in records {
        frames.entry((r.scene_id.as_str(), r.frame_index)).or_default().push(r);
    }
    let mut decisions = Vec::with_capacity(records.len());
    let mut scored = Vec::with_capacity(records.len());
    let mut frame_ms = Vec::with_capacity(frames.len());
    let mut track_ms = 0.0;
    let mut current_scene: Option<&str> = None;
    pipeline.reset();
    for ((scene, frame_index), mut recs) in frames {
        if current_scene != Some(scene) {
            pipeline.reset();
            current_scene = Some(scene);
        }
        recs.sort_by_key(|r| r.track_id);
        let inputs: Vec<TrackInput<'_>> = recs.iter().map(|r| TrackInput::from_record(r)).collect();
        let ctx = FrameContext {
            frame_index,
            patches: PatchSource::Simulator { seed: patches_seed },
        };
        let t0 = Instant::now();
        let out = pipeline.process_frame(scene, &inputs, &ctx);
        frame_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        for (r, d) in recs.iter().zip(&out) {
            track_ms += d.latency_ms;
            scored.push(FrameRecord {
                score: d.score,
                ..(*r).clone()
            });
        }
        decisions.extend(out);
    }
    let report = EvalReport::build(name, &scored, pipeline.settings.smoother, DEFAULT_RECALL_TARGET)?;
    Ok(RunOutput {
        decisions,
        latency: LatencyStats::from_samples(&frame_ms, track_ms),
        scored,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::SyntheticClassifier;

    fn track(id: u64, z: f64) -> TrackState {
        TrackState {
            track_id: TrackId(id),
            timestamp: 0.0,
            center_x: 0.0,
            center_y: 1.0,
            center_z: z,
            length: 4.5,
            width: 1.9,
            height: 1.6,
            yaw: 0.0,
        }
    }

    fn input(state: TrackState, positive: bool) -> TrackInput<'static> {
        TrackInput {
            state,
            stream: state.track_id.0,
            truth: Some(FrameTruth {
                positive,
                confounder_lit: false,
                crop_side: 0.0,
            }),
            record: None,
        }
    }

    fn pipeline() -> Pipeline {
        Pipeline::new(PipelineSettings::default(), Box::new(SyntheticClassifier::oracle())).unwrap()
    }

    fn ctx(frame_index: u64) -> FrameContext<'static> {
        FrameContext {
            frame_index,
            patches: PatchSource::None,
        }
    }

    #[test]
    fn empty_frame_is_a_no_op() {
        let mut p = pipeline();
        assert!(p.process_frame("s", &[], &ctx(0)).is_empty());
        assert_eq!(p.tracked(), 0);
    }

    #[test]
    fn invalid_then_valid_track_activates_on_sixth_valid_frame() {
        let mut p = pipeline();
        let far = track(1, 500.0);
        let near = track(1, 20.0);
        for f in 0..30 {
            let d = p.process_frame("s", &[input(far, true)], &ctx(f));
            assert!(!d[0].crop_valid && !d[0].active);
        }
        for k in 0..6 {
            let d = p.process_frame("s", &[input(near, true)], &ctx(30 + k));
            assert_eq!(d[0].active, k == 5, "valid frame {}", k + 1);
        }
    }

    #[test]
    fn bad_track_does_not_abort_frame() {
        let mut p = pipeline();
        let mut broken = track(2, 20.0);
        broken.length = -1.0;
        let out = p.process_frame(
            "s",
            &[input(track(1, 20.0), true), input(broken, true), input(track(1, 25.0), true)],
            &ctx(0),
        );
        assert_eq!(out.len(), 3);
        assert!(out[0].error.is_none() && out[0].score == Some(1.0));
        assert!(out[1].error.is_some());
        assert!(out[2].error.as_deref().unwrap().contains("duplicate"));
    }

    #[test]
    fn latency_percentile() {
        let samples: Vec<f64> = (1..=200).map(f64::from).collect();
        let s = LatencyStats::from_samples(&samples, 100.0);
        assert_eq!(s.p99_ms, 198.0);
        assert_eq!(s.mean_ms, 100.5);
        assert_eq!(s.max_ms, 200.0);
    }
}

//! Steady-load latency benchmark.
//!
//! A fixed number of track slots is kept filled with simulated actors; when
//! an actor's track ends the slot takes the next one. Each frame is rendered
//! to a full camera image first, then only [`Pipeline::process_frame`] is
//! timed: crop, patch extraction, classification and smoothing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::geometry::FrameImage;
use crate::pipeline::{FrameContext, LatencyStats, PatchSource, Pipeline, PipelineError, PipelineSettings, TrackInput};
use crate::simulator::{background_frame, render_frame, FrameRecord, SceneConfig, SceneGenerator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub tracks_per_frame: usize,
    pub frames: usize,
    pub budget_ms: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            tracks_per_frame: 200,
            frames: 1000,
            budget_ms: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub tracks_per_frame: usize,
    pub frames: usize,
    pub threads: usize,
    pub patch_size: usize,
    /// Share of track-frames whose crop passed the geometry filters.
    pub valid_fraction: f64,
    pub latency: LatencyStats,
    pub budget_ms: f64,
    pub passed: bool,
}

struct Slot {
    frames: Vec<FrameRecord>,
    cursor: usize,
}

pub fn run_bench(
    cfg: &BenchConfig,
    settings: PipelineSettings,
    scene: SceneConfig,
    classifier: Box<dyn Classifier>,
) -> Result<BenchReport, PipelineError> {
    let generator =
        SceneGenerator::new(scene, settings.camera, settings.min_width).map_err(|e| PipelineError::Setup(e.to_string()))?;
    let noise = settings.render.noise_amplitude;
    let background: FrameImage = background_frame(&settings.camera, cfg.seed, 1.0, noise);
    let mut pipeline = Pipeline::new(settings, classifier)?;

    let mut next_actor = 0usize;
    let mut fresh = || {
        let a = generator.actor(next_actor);
        next_actor += 1;
        Slot {
            frames: generator.frames(&a),
            cursor: 0,
        }
    };
    let mut slots: Vec<Slot> = (0..cfg.tracks_per_frame).map(|_| fresh()).collect();

    let mut frame_ms = Vec::with_capacity(cfg.frames);
    let mut track_ms = 0.0;
    let (mut valid, mut total) = (0usize, 0usize);
    for f in 0..cfg.frames {
        for slot in slots.iter_mut() {
            if slot.cursor >= slot.frames.len() {
                *slot = fresh();
            }
        }
        let records: Vec<&FrameRecord> = slots.iter().map(|s| &s.frames[s.cursor]).collect();
        let image = render_frame(&background, &records, cfg.seed, noise);
        let inputs: Vec<TrackInput<'_>> = records.iter().map(|r| TrackInput::from_record(r)).collect();
        let ctx = FrameContext {
            frame_index: f as u64,
            patches: PatchSource::Frame(&image),
        };

        let t0 = Instant::now();
        let out = pipeline.process_frame("bench", &inputs, &ctx);
        frame_ms.push(t0.elapsed().as_secs_f64() * 1e3);

        for d in &out {
            track_ms += d.latency_ms;
            valid += d.crop_valid as usize;
            total += 1;
            if let Some(e) = &d.error {
                return Err(PipelineError::Setup(format!("track {} failed: {e}", d.track_id)));
            }
        }
        for slot in slots.iter_mut() {
            slot.cursor += 1;
        }
    }
    let latency = LatencyStats::from_samples(&frame_ms, track_ms);
    Ok(BenchReport {
        tracks_per_frame: cfg.tracks_per_frame,
        frames: cfg.frames,
        threads: pipeline.settings().threads,
        patch_size: pipeline.settings().render.patch_size,
        valid_fraction: if total > 0 { valid as f64 / total as f64 } else { 0.0 },
        latency,
        budget_ms: cfg.budget_ms,
        passed: latency.mean_ms < cfg.budget_ms,
    })
}

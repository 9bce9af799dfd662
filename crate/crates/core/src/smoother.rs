//! Per-track temporal voting over recent frame classifications.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    /// Number of most recent valid frames kept per track.
    pub window: usize,
    /// Minimum valid frames before any decision can be active.
    pub min_frames: usize,
    /// Active when the positive fraction is strictly above this value.
    pub threshold: f64,
    /// Score at or above which a frame counts as positive.
    pub frame_threshold: f64,
    /// Clear the buffer whenever a frame has no valid crop.
    pub reset_on_invalid: bool,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            window: 25,
            min_frames: 6,
            threshold: 0.5,
            frame_threshold: 0.5,
            reset_on_invalid: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmootherError {
    #[error("invalid smoother config: {0}")]
    InvalidConfig(String),
}

impl SmootherConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SmootherError> {
        if self.window == 0 {
            return Err(SmootherError::InvalidConfig("window must be positive".into()));
        }
        if self.min_frames > self.window {
            return Err(SmootherError::InvalidConfig(format!(
                "min_frames {} exceeds window {}",
                self.min_frames, self.window
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) || !(0.0..=1.0).contains(&self.frame_threshold) {
            return Err(SmootherError::InvalidConfig("thresholds must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedDecision {
    pub active: bool,
    pub frames: usize,
    pub positives: usize,
}

impl SmoothedDecision {
    pub fn positive_fraction(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.positives as f64 / self.frames as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackSmoother {
    cfg: SmootherConfig,
    buf: VecDeque<bool>,
    positives: usize,
}

impl TrackSmoother {
    pub fn new(cfg: SmootherConfig) -> Result<Self, SmootherError> {
        cfg.validate()?;
        Ok(Self {
            buf: VecDeque::with_capacity(cfg.window),
            cfg,
            positives: 0,
        })
    }

    pub fn config(&self) -> &SmootherConfig {
        &self.cfg
    }

    /// Records one frame. `score` is `None` when the crop was invalid; such
    /// frames leave the buffer untouched unless `reset_on_invalid` is set.
    pub fn push(&mut self, score: Option<f64>) {
        let Some(score) = score else {
            if self.cfg.reset_on_invalid {
                self.reset();
            }
            return;
        };
        if self.buf.len() == self.cfg.window && self.buf.pop_front() == Some(true) {
            self.positives -= 1;
        }
        let positive = score >= self.cfg.frame_threshold;
        self.buf.push_back(positive);
        self.positives += positive as usize;
    }

    pub fn decide(&self) -> SmoothedDecision {
        let frames = self.buf.len();
        let active = frames >= self.cfg.min_frames && frames > 0 && self.positives as f64 / frames as f64 > self.cfg.threshold;
        SmoothedDecision {
            active,
            frames,
            positives: self.positives,
        }
    }

    pub fn push_and_decide(&mut self, score: Option<f64>) -> SmoothedDecision {
        self.push(score);
        self.decide()
    }

    pub fn reset(&mut self) {
        self.buf.clear();
        self.positives = 0;
    }
}

/// Runs a fresh smoother over a track's score sequence and returns one
/// decision per frame.
pub fn smooth_sequence(cfg: SmootherConfig, scores: &[Option<f64>]) -> Result<Vec<SmoothedDecision>, SmootherError> {
    let mut s = TrackSmoother::new(cfg)?;
    Ok(scores.iter().map(|&x| s.push_and_decide(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(cfg: SmootherConfig, scores: &[Option<f64>]) -> Vec<bool> {
        smooth_sequence(cfg, scores).unwrap().into_iter().map(|d| d.active).collect()
    }

    #[test]
    fn needs_six_frames() {
        let out = run(SmootherConfig::default(), &[Some(1.0); 8]);
        assert_eq!(out, [false, false, false, false, false, true, true, true]);
    }

    #[test]
    fn exact_half_is_not_active() {
        let scores: Vec<_> = (0..10).map(|i| Some(if i % 2 == 1 { 0.9 } else { 0.1 })).collect();
        assert!(run(SmootherConfig::default(), &scores).iter().all(|a| !a));
    }

    #[test]
    fn window_evicts_old_frames() {
        let mut scores = vec![Some(1.0); 25];
        scores.extend(vec![Some(0.0); 13]);
        let d = smooth_sequence(SmootherConfig::default(), &scores).unwrap();
        let last = d.last().unwrap();
        assert_eq!(last.frames, 25);
        assert_eq!(last.positives, 12);
        assert!(!last.active);
        assert!(d[36].active);
    }

    #[test]
    fn invalid_frames_are_skipped_without_reset() {
        let scores = [Some(1.0), Some(1.0), Some(1.0), None, None, Some(1.0), Some(1.0), Some(1.0)];
        let out = run(SmootherConfig::default(), &scores);
        assert!(out[7]);
        assert!(!out[4]);
        let reset = SmootherConfig {
            reset_on_invalid: true,
            ..Default::default()
        };
        assert!(!run(reset, &scores)[7]);
    }

    #[test]
    fn threshold_zero_fires_on_any_positive() {
        let mut scores = vec![Some(0.0); 10];
        scores[2] = Some(0.7);
        let out = run(SmootherConfig::with_threshold(0.0), &scores);
        assert!(out[5..].iter().all(|&a| a));
        assert!(out[..5].iter().all(|&a| !a));
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SmootherConfig {
            min_frames: 30,
            ..Default::default()
        };
        assert!(TrackSmoother::new(bad).is_err());
    }
}

//! Beacon flash patterns.
//!
//! A periodic pattern lights each bulb for a contiguous run of frames per
//! period. Consecutive bulbs overlap by one frame and the union leaves a
//! fixed number of all-off frames, chosen so the all-off fraction is the
//! closest achievable match to the target over the allowed periods.

use serde::{Deserialize, Serialize};

use crate::rng;

/// Candidate periods (frames) searched when solving a periodic pattern.
pub const PERIOD_RANGE: std::ops::RangeInclusive<u32> = 8..=24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlashMode {
    Periodic,
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bulb {
    /// First lit frame within the period.
    pub phase_offset: u32,
    pub on_frames: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlashPattern {
    pub mode: FlashMode,
    pub period: u32,
    pub bulbs: Vec<Bulb>,
    pub target_all_off_fraction: f64,
    /// Actor-specific offset into the period.
    #[serde(default)]
    pub phase: u32,
}

impl FlashPattern {
    /// Solves a periodic pattern with `bulb_count` bulbs whose all-off
    /// fraction is as close to `target` as the period range allows.
    pub fn solve_periodic(target: f64, bulb_count: usize) -> Self {
        let target = target.clamp(0.0, 1.0);
        let bulb_count = bulb_count.max(1) as u32;
        let mut best: Option<(f64, u32, u32)> = None;
        for period in PERIOD_RANGE {
            let mut off = (target * period as f64).round() as u32;
            if target > 0.0 && off == 0 {
                off = 1;
            }
            let err = (off as f64 / period as f64 - target).abs();
            if best.is_none_or(|(e, _, _)| err < e - 1e-12) {
                best = Some((err, period, off));
            }
        }
        let (_, period, off) = best.expect("non-empty period range");
        let lit = period - off;
        let bulbs = (0..bulb_count)
            .map(|i| {
                let start = i * lit / bulb_count;
                let end = (i + 1) * lit / bulb_count;
                // overlap one frame with the previous bulb
                let start = if i > 0 && start > 0 { start - 1 } else { start };
                Bulb {
                    phase_offset: start,
                    on_frames: end - start,
                }
            })
            .collect();
        Self {
            mode: FlashMode::Periodic,
            period,
            bulbs,
            target_all_off_fraction: target,
            phase: 0,
        }
    }

    /// I.i.d. per-frame pattern: all bulbs off with probability `target`.
    pub fn bernoulli(target: f64, bulb_count: usize) -> Self {
        Self {
            mode: FlashMode::Bernoulli,
            period: 1,
            bulbs: vec![
                Bulb {
                    phase_offset: 0,
                    on_frames: 1
                };
                bulb_count.max(1)
            ],
            target_all_off_fraction: target.clamp(0.0, 1.0),
            phase: 0,
        }
    }

    pub fn with_phase(mut self, phase: u32) -> Self {
        self.phase = phase % self.period.max(1);
        self
    }

    pub fn bulb_on_fraction(&self, bulb: usize) -> f64 {
        self.bulbs[bulb].on_frames as f64 / self.period as f64
    }

    /// Bitmask of lit bulbs at `frame`. `key` seeds the Bernoulli draws.
    pub fn lit_bulbs(&self, frame: u64, key: u64) -> u8 {
        match self.mode {
            FlashMode::Periodic => {
                let p = self.period as u64;
                let local = (frame + self.phase as u64) % p;
                self.bulbs.iter().enumerate().fold(0u8, |mask, (i, b)| {
                    let rel = (local + p - b.phase_offset as u64 % p) % p;
                    if rel < b.on_frames as u64 {
                        mask | (1 << i)
                    } else {
                        mask
                    }
                })
            }
            FlashMode::Bernoulli => {
                if rng::unit(rng::mix(&[key, frame, 0])) < self.target_all_off_fraction {
                    return 0;
                }
                let n = self.bulbs.len().min(8) as u32;
                let full = if n >= 8 { u8::MAX } else { (1u16 << n) as u8 - 1 };
                // uniform non-empty subset
                let pick = (rng::unit(rng::mix(&[key, frame, 1])) * full as f64) as u8;
                pick.min(full - 1) + 1
            }
        }
    }

    /// Exact all-off fraction over one period (periodic mode) or the draw
    /// probability (Bernoulli mode).
    pub fn all_off_fraction(&self) -> f64 {
        match self.mode {
            FlashMode::Periodic => {
                let off = (0..self.period as u64).filter(|&f| self.lit_bulbs(f, 0) == 0).count();
                off as f64 / self.period as f64
            }
            FlashMode::Bernoulli => self.target_all_off_fraction,
        }
    }
}

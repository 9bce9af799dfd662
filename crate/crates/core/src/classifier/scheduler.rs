//! Reduce-on-plateau learning-rate schedule with a stopping floor.
//!
//! The first observed loss only establishes the running best, so it counts
//! as a step without improvement. Once more than `patience` consecutive
//! steps pass without the best improving by `min_improvement`, the rate is
//! multiplied by `decay_factor` and the counter restarts. Training stops
//! when the rate falls below `stop_lr`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub initial_lr: f64,
    pub patience: u32,
    pub decay_factor: f64,
    pub stop_lr: f64,
    pub min_improvement: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-4,
            patience: 200,
            decay_factor: 0.5,
            stop_lr: 1e-6,
            min_improvement: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    cfg: PlateauConfig,
    lr: f64,
    best: Option<f64>,
    stale_steps: u32,
    decays: u32,
    steps: u64,
    stopped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerStep {
    pub lr: f64,
    pub decayed: bool,
    pub stop: bool,
}

impl PlateauScheduler {
    pub fn new(cfg: PlateauConfig) -> Self {
        Self {
            lr: cfg.initial_lr,
            cfg,
            best: None,
            stale_steps: 0,
            decays: 0,
            steps: 0,
            stopped: cfg.initial_lr < cfg.stop_lr,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn decays(&self) -> u32 {
        self.decays
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn step(&mut self, loss: f64) -> SchedulerStep {
        self.steps += 1;
        match self.best {
            Some(best) if loss < best - self.cfg.min_improvement => {
                self.best = Some(loss);
                self.stale_steps = 0;
            }
            Some(_) => self.stale_steps += 1,
            None => {
                self.best = Some(loss);
                self.stale_steps = 1;
            }
        }
        let mut decayed = false;
        if self.stale_steps > self.cfg.patience {
            self.lr *= self.cfg.decay_factor;
            self.stale_steps = 0;
            self.decays += 1;
            decayed = true;
        }
        self.stopped |= self.lr < self.cfg.stop_lr;
        SchedulerStep {
            lr: self.lr,
            decayed,
            stop: self.stopped,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(patience: u32) -> PlateauScheduler {
        PlateauScheduler::new(PlateauConfig {
            initial_lr: 1e-4,
            patience,
            decay_factor: 0.5,
            stop_lr: 1e-6,
            min_improvement: 1e-6,
        })
    }

    #[test]
    fn decreasing_loss_never_decays() {
        let mut s = sched(3);
        for i in 0..1000 {
            let out = s.step(10.0 - i as f64 * 1e-3);
            assert!(!out.decayed && !out.stop);
        }
        assert_eq!(s.lr(), 1e-4);
    }

    #[test]
    fn constant_loss_decays_every_fourth_step_with_patience_three() {
        let mut s = sched(3);
        let mut decay_steps = Vec::new();
        let mut stop_at = None;
        for step in 1..=40u32 {
            let out = s.step(1.0);
            if out.decayed {
                decay_steps.push(step);
            }
            if out.stop && stop_at.is_none() {
                stop_at = Some(step);
            }
        }
        assert_eq!(&decay_steps[..3], &[4, 8, 12]);
        assert_eq!(stop_at, Some(28));
        // 1e-4 * 0.5^6 >= 1e-6 > 1e-4 * 0.5^7
        assert_eq!(decay_steps.iter().filter(|&&s| s <= 28).count(), 7);
    }

    #[test]
    fn tiny_improvements_do_not_reset_patience() {
        let mut s = sched(2);
        s.step(1.0);
        s.step(1.0 - 5e-7);
        let out = s.step(1.0 - 9e-7);
        assert!(out.decayed);
    }

    #[test]
    fn lr_never_increases_and_stop_is_sticky() {
        let mut s = sched(1);
        let mut prev = s.lr();
        let mut stopped = false;
        for i in 0..200 {
            let loss = if i % 7 == 0 { 0.5 } else { 1.0 };
            let out = s.step(loss);
            assert!(out.lr <= prev);
            assert!(!stopped || out.stop);
            stopped = out.stop;
            prev = out.lr;
        }
        assert!(stopped);
    }
}

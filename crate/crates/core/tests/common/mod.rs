#![allow(dead_code)]

use evdet::classifier::{FeatureVector, TrainingObjective};
use evdet::geometry::{CameraModel, TrackState, EPSILON_Z};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Square center and side from projecting every signed corner offset onto
/// the normalized image plane and keeping the extremes. `None` when any corner is at or behind the plane.
pub fn oracle_square(cam: &CameraModel, t: &TrackState) -> Option<(f64, f64, f64)> {
    let (s, c) = t.yaw.sin_cos();
    let mut us = Vec::with_capacity(8);
    let mut vs = Vec::with_capacity(8);
    for sl in [-1.0, 1.0] {
        for sw in [-1.0, 1.0] {
            for sh in [-1.0, 1.0] {
                let (dl, dw, dh) = (sl * t.length / 2.0, sw * t.width / 2.0, sh * t.height / 2.0);
                let x = t.center_x + dl * c - dw * s;
                let y = t.center_y + dh;
                let z = t.center_z + dl * s + dw * c;
                if z <= EPSILON_Z {
                    return None;
                }
                us.push(x / z);
                vs.push(y / z);
            }
        }
    }
    let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (u0, u1, v0, v1) = (lo(&us), hi(&us), lo(&vs), hi(&vs));
    Some((
        cam.focal_u * ((u0 + u1) / 2.0) + cam.principal_u,
        cam.focal_v * ((v0 + v1) / 2.0) + cam.principal_v,
        (cam.focal_u * (u1 - u0)).max(cam.focal_v * (v1 - v0)),
    ))
}

/// Fraction of positives over the last `window` valid entries, or `None`
/// while fewer than `min_frames` valid entries have been seen.
pub fn recount(seq: &[Option<bool>], window: usize, min_frames: usize, threshold: f64) -> bool {
    let valid: Vec<bool> = seq.iter().flatten().copied().collect();
    let tail = &valid[valid.len().saturating_sub(window)..];
    if tail.len() < min_frames {
        return false;
    }
    let pos = tail.iter().filter(|&&b| b).count();
    pos as f64 / tail.len() as f64 > threshold
}

/// Features with a weak class signal, so the objective has curvature in
/// every direction.
pub fn samples(n: usize, seed: u64) -> Vec<(FeatureVector, bool)> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let y = r.random_bool(0.2);
            let shift = if y { 0.7 } else { 0.0 };
            (
                FeatureVector(std::array::from_fn(|k| r.random_range(-1.0..1.0) + shift * (k % 3) as f64)),
                y,
            )
        })
        .collect()
}

/// Largest per-parameter `|analytic - numeric| / max(|analytic|, |numeric|)`.
pub fn gradient_error(objective: &TrainingObjective, params: &[f64], h: f64) -> f64 {
    let mut grad = vec![0.0; params.len()];
    objective.value_and_grad(params, &mut grad);
    let mut worst = 0.0f64;
    let mut p = params.to_vec();
    for k in 0..params.len() {
        p[k] = params[k] + h;
        let up = objective.value(&p);
        p[k] = params[k] - h;
        let down = objective.value(&p);
        p[k] = params[k];
        let numeric = (up - down) / (2.0 * h);
        let scale = grad[k].abs().max(numeric.abs());
        if scale > 0.0 {
            worst = worst.max((grad[k] - numeric).abs() / scale);
        }
    }
    worst
}

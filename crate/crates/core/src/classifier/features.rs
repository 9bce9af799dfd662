//! Patch statistics used by the trainable classifier.
//!
//! Layout of schema version 1:
//!
//! | index | feature |
//! |-------|---------|
//! | 0 | max intensity over all channels |
//! | 1-3 | mean R, G, B |
//! | 4 | bright-pixel fraction |
//! | 5, 6 | bright fraction in the upper / lower half |
//! | 7 | mean vertical position of bright pixels, `[-1, 1]`, top negative |
//! | 8 | mean squared radius of bright pixels |
//! | 9-12 | red / blue / amber / white bright fractions |
//!
//! All fractions are relative to the patch area, so features are roughly
//! independent of patch size.

use serde::{Deserialize, Serialize};

use crate::geometry::ImagePatch;
use crate::simulator::BRIGHT_LEVEL;

pub const FEATURE_SCHEMA_VERSION: u32 = 1;
pub const FEATURE_LEN: usize = 13;

pub const FEATURE_NAMES: [&str; FEATURE_LEN] = [
    "max_intensity",
    "mean_r",
    "mean_g",
    "mean_b",
    "bright_fraction",
    "bright_upper",
    "bright_lower",
    "bright_v_moment",
    "bright_radial_moment",
    "red_fraction",
    "blue_fraction",
    "amber_fraction",
    "white_fraction",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

pub fn extract_features(patch: &ImagePatch) -> FeatureVector {
    let s = patch.size;
    let n = (s * s).max(1) as f64;
    let bright = BRIGHT_LEVEL;
    let mut max_i = 0.0f32;
    let mut sums = [0.0f64; 3];
    let (mut n_bright, mut n_upper, mut n_lower) = (0u32, 0u32, 0u32);
    let (mut v_moment, mut r_moment) = (0.0f64, 0.0f64);
    let (mut n_red, mut n_blue, mut n_amber, mut n_white) = (0u32, 0u32, 0u32, 0u32);
    let inv = 2.0 / s.max(1) as f64;
    for y in 0..s {
        let row = &patch.pixels[y * s * 3..(y + 1) * s * 3];
        let mut row_sums = [0.0f32; 3];
        let yn = (y as f64 + 0.5) * inv - 1.0;
        for (x, px) in row.chunks_exact(3).enumerate() {
            let (r, g, b) = (px[0], px[1], px[2]);
            row_sums[0] += r;
            row_sums[1] += g;
            row_sums[2] += b;
            let m = r.max(g).max(b);
            max_i = max_i.max(m);
            if m <= bright {
                continue;
            }
            n_bright += 1;
            if yn < 0.0 {
                n_upper += 1;
            } else {
                n_lower += 1;
            }
            let xn = (x as f64 + 0.5) * inv - 1.0;
            v_moment += yn;
            r_moment += xn * xn + yn * yn;
            if r > bright && g < 0.45 * r && b < 0.45 * r {
                n_red += 1;
            } else if b > bright && r < 0.45 * b {
                n_blue += 1;
            } else if r > bright && g >= 0.45 * r && g <= 0.85 * r && b < 0.3 * r {
                n_amber += 1;
            } else if r.min(g).min(b) > bright {
                n_white += 1;
            }
        }
        for ch in 0..3 {
            sums[ch] += row_sums[ch] as f64;
        }
    }
    let per_bright = |v: f64| if n_bright > 0 { v / n_bright as f64 } else { 0.0 };
    FeatureVector([
        max_i as f64,
        sums[0] / n,
        sums[1] / n,
        sums[2] / n,
        n_bright as f64 / n,
        n_upper as f64 / n,
        n_lower as f64 / n,
        per_bright(v_moment),
        per_bright(r_moment),
        n_red as f64 / n,
        n_blue as f64 / n,
        n_amber as f64 / n,
        n_white as f64 / n,
    ])
}

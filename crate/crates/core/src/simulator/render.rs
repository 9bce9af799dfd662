//! Stand-in imagery for simulated records.
//!
//! A patch is clutter noise plus a vehicle body, both capped at
//! [`BACKGROUND_CEILING`]. Lit beacons and lit confounders are saturated
//! discs drawn on top; their peak brightness falls with depth but always
//! exceeds [`BRIGHT_LEVEL`].

use super::{ConfounderKind, FrameRecord, SimError, VehicleType};
use crate::geometry::{CameraModel, FrameImage, ImagePatch};
use crate::rng::{self, splitmix64};

/// Maximum intensity of background clutter and vehicle bodies.
pub const BACKGROUND_CEILING: f32 = 0.6;

/// Intensity above which a pixel counts as a light source.
pub const BRIGHT_LEVEL: f32 = 0.62;

/// Depth (m) up to which lights render at full brightness.
const NEAR_RANGE: f64 = 20.0;

const RED: [f32; 3] = [1.0, 0.12, 0.08];
const BLUE: [f32; 3] = [0.10, 0.30, 1.0];
const WHITE: [f32; 3] = [1.0, 1.0, 0.95];
const AMBER: [f32; 3] = [1.0, 0.62, 0.05];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RenderParams {
    pub patch_size: usize,
    pub noise_amplitude: f32,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            patch_size: crate::geometry::DEFAULT_PATCH_SIZE,
            noise_amplitude: 0.15,
        }
    }
}

#[derive(Clone, Copy)]
struct Rect {
    x0: f32,
    y0: f32,
    x1: f32,
    y1: f32,
}

impl Rect {
    fn w(&self) -> f32 {
        self.x1 - self.x0
    }
    fn h(&self) -> f32 {
        self.y1 - self.y0
    }
}

/// Light placed relative to the body rectangle.
#[derive(Clone, Copy)]
struct Light {
    fx: f32,
    fy: f32,
    color: [f32; 3],
    peak: f32,
}

struct Grid<'a> {
    buf: &'a mut [f32],
    width: usize,
    height: usize,
}

fn light_peak(depth: f64) -> f32 {
    (0.65 + 0.35 * (NEAR_RANGE / depth.max(1e-3)).min(1.0)) as f32
}

fn body_color(rec: &FrameRecord) -> [f32; 3] {
    match rec.vehicle_type {
        VehicleType::Police => [0.12, 0.12, 0.16],
        VehicleType::Fire => [0.50, 0.07, 0.05],
        VehicleType::Ambulance => [0.55, 0.55, 0.52],
        VehicleType::NonEv => {
            let g = 0.10 + 0.45 * rng::unit(rng::mix(&[rec.track_id.0, 0xB0D1])) as f32;
            [g, g, (g * 1.05).min(BACKGROUND_CEILING)]
        }
    }
}

fn lights(rec: &FrameRecord) -> Vec<Light> {
    let peak = light_peak(rec.state.center_z);
    let mut out = Vec::new();
    if rec.is_active && rec.lit_bulbs != 0 {
        let n = (8 - rec.lit_bulbs.leading_zeros()).max(2) as usize;
        for i in 0..n {
            if rec.lit_bulbs & (1 << i) == 0 {
                continue;
            }
            let color = match (rec.vehicle_type, i % 2) {
                (VehicleType::Police, 0) => RED,
                (VehicleType::Police, _) => BLUE,
                (VehicleType::Ambulance, 1) => WHITE,
                _ => RED,
            };
            let fx = 0.25 + 0.5 * i as f32 / (n - 1) as f32;
            out.push(Light {
                fx,
                fy: 0.1,
                color,
                peak,
            });
        }
    }
    if rec.confounder_lit {
        match rec.confounder {
            Some(ConfounderKind::BrakeLights) => {
                for fx in [0.12, 0.88] {
                    out.push(Light {
                        fx,
                        fy: 0.75,
                        color: RED,
                        peak,
                    });
                }
            }
            Some(ConfounderKind::AmberBeacon) => out.push(Light {
                fx: 0.5,
                fy: 0.1,
                color: AMBER,
                peak,
            }),
            None => {}
        }
    }
    out
}

#[inline]
fn noise3(key: u64, index: u64) -> [f32; 3] {
    let h = splitmix64(key ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let scale = 1.0 / (1u32 << 21) as f32;
    [
        (h & 0x1F_FFFF) as f32 * scale,
        ((h >> 21) & 0x1F_FFFF) as f32 * scale,
        ((h >> 42) & 0x1F_FFFF) as f32 * scale,
    ]
}

fn paint_background(g: &mut Grid<'_>, key: u64, ambient: f32, amp: f32) {
    let base = [0.28 * ambient, 0.29 * ambient, 0.30 * ambient];
    for (i, px) in g.buf.chunks_exact_mut(3).enumerate() {
        let n = noise3(key, i as u64);
        for ch in 0..3 {
            px[ch] = (base[ch] + amp * (n[ch] - 0.5) * 2.0).clamp(0.0, BACKGROUND_CEILING);
        }
    }
}

fn clip_range(lo: f32, hi: f32, n: usize) -> std::ops::Range<usize> {
    let a = lo.floor().max(0.0) as usize;
    let b = (hi.ceil().max(0.0) as usize).min(n);
    a.min(b)..b
}

fn paint_vehicle(g: &mut Grid<'_>, body: Rect, rec: &FrameRecord, key: u64, amp: f32) {
    let color = body_color(rec);
    let ambient = rec.ambient as f32;
    let xs = clip_range(body.x0, body.x1, g.width);
    for y in clip_range(body.y0, body.y1, g.height) {
        for x in xs.clone() {
            let i = y * g.width + x;
            let n = noise3(key ^ 0xB0D7, i as u64);
            let px = &mut g.buf[i * 3..i * 3 + 3];
            for ch in 0..3 {
                px[ch] = (color[ch] * ambient.min(1.0) + 0.5 * amp * (n[ch] - 0.5) * 2.0).clamp(0.0, BACKGROUND_CEILING);
            }
        }
    }
    let radius = (0.07 * body.w()).max(1.2);
    let soft = (0.3 * radius).max(1.0);
    for l in lights(rec) {
        let cx = body.x0 + l.fx * body.w();
        let cy = body.y0 + l.fy * body.h();
        let reach = radius + soft;
        for y in clip_range(cy - reach, cy + reach, g.height) {
            for x in clip_range(cx - reach, cx + reach, g.width) {
                let (dx, dy) = (x as f32 + 0.5 - cx, y as f32 + 0.5 - cy);
                let d = (dx * dx + dy * dy).sqrt();
                let profile = if d <= radius {
                    1.0
                } else {
                    (1.0 - (d - radius) / soft).max(0.0)
                };
                if profile <= 0.0 {
                    continue;
                }
                let i = (y * g.width + x) * 3;
                for ch in 0..3 {
                    let v = (l.color[ch] * l.peak * profile).min(1.0);
                    if v > g.buf[i + ch] {
                        g.buf[i + ch] = v;
                    }
                }
            }
        }
        // the pixel under the light center always carries the full peak
        let (x, y) = (cx.floor(), cy.floor());
        if x >= 0.0 && y >= 0.0 && (x as usize) < g.width && (y as usize) < g.height {
            let i = (y as usize * g.width + x as usize) * 3;
            for ch in 0..3 {
                g.buf[i + ch] = g.buf[i + ch].max((l.color[ch] * l.peak).min(1.0));
            }
        }
    }
}

/// Renders the classifier input for a record at the configured patch size.
pub fn render_patch_with(rec: &FrameRecord, seed: u64, params: &RenderParams) -> Result<ImagePatch, SimError> {
    if !rec.crop.valid || !(rec.crop.side > 0.0) {
        return Err(SimError::InvalidRegion {
            track_id: rec.track_id,
            frame_index: rec.frame_index,
        });
    }
    let s = params.patch_size;
    let mut pixels = vec![0.0f32; s * s * 3];
    let key = rng::mix(&[seed, rec.render_key()]);
    let mut grid = Grid {
        buf: &mut pixels,
        width: s,
        height: s,
    };
    paint_background(&mut grid, key, rec.ambient as f32, params.noise_amplitude);
    let scale = s as f32 / rec.crop.side as f32;
    let (bw, bh) = (rec.crop.extent_u as f32 * scale, rec.crop.extent_v as f32 * scale);
    let c = s as f32 / 2.0;
    let body = Rect {
        x0: c - bw / 2.0,
        y0: c - bh / 2.0,
        x1: c + bw / 2.0,
        y1: c + bh / 2.0,
    };
    paint_vehicle(&mut grid, body, rec, key, params.noise_amplitude);
    Ok(ImagePatch::new(s, pixels, rec.crop))
}

pub fn render_patch(rec: &FrameRecord, seed: u64, patch_size: usize) -> Result<ImagePatch, SimError> {
    render_patch_with(
        rec,
        seed,
        &RenderParams {
            patch_size,
            ..Default::default()
        },
    )
}

/// Renders a full camera frame containing every record with a valid crop.
/// `background` is reused as-is (see [`background_frame`]).
pub fn render_frame(background: &FrameImage, records: &[&FrameRecord], seed: u64, noise_amplitude: f32) -> FrameImage {
    let mut img = background.clone();
    let mut grid = Grid {
        buf: &mut img.pixels,
        width: background.width,
        height: background.height,
    };
    // far vehicles first so near ones occlude them
    let mut order: Vec<&&FrameRecord> = records.iter().filter(|r| r.crop.valid).collect();
    order.sort_by(|a, b| b.state.center_z.total_cmp(&a.state.center_z));
    for rec in order {
        let c = &rec.crop;
        let body = Rect {
            x0: (c.center_u - c.extent_u / 2.0) as f32,
            y0: (c.center_v - c.extent_v / 2.0) as f32,
            x1: (c.center_u + c.extent_u / 2.0) as f32,
            y1: (c.center_v + c.extent_v / 2.0) as f32,
        };
        let key = rng::mix(&[seed, rec.render_key()]);
        paint_vehicle(&mut grid, body, rec, key, noise_amplitude);
    }
    img
}

/// Static clutter frame matching the camera's resolution.
pub fn background_frame(camera: &CameraModel, seed: u64, ambient: f32, noise_amplitude: f32) -> FrameImage {
    let (w, h) = (camera.image_width as usize, camera.image_height as usize);
    let mut img = FrameImage::filled(w, h, 0.0);
    let mut grid = Grid {
        buf: &mut img.pixels,
        width: w,
        height: h,
    };
    paint_background(&mut grid, rng::mix(&[seed, 0xBAC6]), ambient, noise_amplitude);
    img
}

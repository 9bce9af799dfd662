//! Pinhole projection of tracked 3D boxes into the forward camera, square
//! crop computation and fixed-size patch extraction.
//!
//! Coordinates are in the camera frame: `x` right, `y` down, `z` forward
//! (meters). Image coordinates are `u` right, `v` down (pixels).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Corners closer than this to the image plane are treated as behind the camera.
pub const EPSILON_Z: f64 = 0.1;

/// Default minimum projected width in pixels.
pub const DEFAULT_MIN_WIDTH: f64 = 18.0;

/// Default classifier input size in pixels.
pub const DEFAULT_PATCH_SIZE: usize = 224;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("invalid track state: {0}")]
    InvalidTrack(String),
    #[error("crop region is not valid ({0:?})")]
    InvalidRegion(Option<InvalidReason>),
    #[error("patch size must be positive")]
    ZeroPatchSize,
}

/// Calibrated forward camera without lens distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    pub focal_u: f64,
    pub focal_v: f64,
    pub principal_u: f64,
    pub principal_v: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            focal_u: 1000.0,
            focal_v: 1000.0,
            principal_u: 960.0,
            principal_v: 600.0,
            image_width: 1920,
            image_height: 1200,
        }
    }
}

impl CameraModel {
    pub fn new(
        focal_u: f64,
        focal_v: f64,
        principal_u: f64,
        principal_v: f64,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            focal_u,
            focal_v,
            principal_u,
            principal_v,
            image_width,
            image_height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.focal_u > 0.0 && self.focal_v > 0.0) {
            return Err(GeometryError::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(GeometryError::InvalidCamera("image dimensions must be positive".into()));
        }
        if !self.contains(self.principal_u, self.principal_v) {
            return Err(GeometryError::InvalidCamera(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(())
    }

    /// Whether a pixel coordinate lies inside `[0, width) x [0, height)`.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.image_width as f64 && v >= 0.0 && v < self.image_height as f64
    }

    /// Returns the same camera with both focal lengths multiplied by `factor`.
    pub fn scaled_focal(&self, factor: f64) -> Self {
        Self {
            focal_u: self.focal_u * factor,
            focal_v: self.focal_v * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

/// Opaque track identifier assigned by the upstream tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub u64);

impl std::fmt::Display for TrackId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One observation of a tracked vehicle box, in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub track_id: TrackId,
    /// Seconds.
    pub timestamp: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub center_z: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Heading about the vertical axis, radians in `[-pi, pi)`.
    pub yaw: f64,
}

impl TrackState {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.length > 0.0 && self.width > 0.0 && self.height > 0.0) {
            return Err(GeometryError::InvalidTrack("box dimensions must be positive".into()));
        }
        if !(-std::f64::consts::PI..std::f64::consts::PI).contains(&self.yaw) {
            return Err(GeometryError::InvalidTrack(format!("yaw {} outside [-pi, pi)", self.yaw)));
        }
        Ok(())
    }

    pub fn center(&self) -> Point3 {
        Point3::new(self.center_x, self.center_y, self.center_z)
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

pub fn project_point(cam: &CameraModel, p: Point3) -> Result<Pixel, GeometryError> {
    if p.z <= EPSILON_Z {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok(Pixel {
        u: cam.focal_u * p.x / p.z + cam.principal_u,
        v: cam.focal_v * p.y / p.z + cam.principal_v,
    })
}

/// The eight corners of the oriented box. Length lies along `x` at zero yaw;
/// yaw rotates the footprint in the `xz` ground plane.
pub fn box_corners(t: &TrackState) -> [Point3; 8] {
    let (s, c) = t.yaw.sin_cos();
    let (hl, hw, hh) = (t.length / 2.0, t.width / 2.0, t.height / 2.0);
    let mut out = [Point3::new(0.0, 0.0, 0.0); 8];
    let mut i = 0;
    for dl in [-hl, hl] {
        for dw in [-hw, hw] {
            for dh in [-hh, hh] {
                out[i] = Point3::new(t.center_x + dl * c - dw * s, t.center_y + dh, t.center_z + dl * s + dw * c);
                i += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    BehindCamera,
    CentroidOutOfFov,
    BelowMinWidth,
}

/// Square image region enclosing a track's projected box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropRegion {
    pub center_u: f64,
    pub center_v: f64,
    pub side: f64,
    /// Horizontal extent of the projected corners (the "projected width").
    pub extent_u: f64,
    pub extent_v: f64,
    /// Mean of the projected corners.
    pub centroid_u: f64,
    pub centroid_v: f64,
    pub valid: bool,
    pub invalid_reason: Option<InvalidReason>,
}

impl CropRegion {
    fn behind_camera() -> Self {
        Self {
            center_u: 0.0,
            center_v: 0.0,
            side: 0.0,
            extent_u: 0.0,
            extent_v: 0.0,
            centroid_u: 0.0,
            centroid_v: 0.0,
            valid: false,
            invalid_reason: Some(InvalidReason::BehindCamera),
        }
    }

    /// An already-validated square, e.g. for extracting a hand-picked region.
    pub fn square(center_u: f64, center_v: f64, side: f64) -> Self {
        Self {
            center_u,
            center_v,
            side,
            extent_u: side,
            extent_v: side,
            centroid_u: center_u,
            centroid_v: center_v,
            valid: true,
            invalid_reason: None,
        }
    }

    pub fn left(&self) -> f64 {
        self.center_u - self.side / 2.0
    }

    pub fn top(&self) -> f64 {
        self.center_v - self.side / 2.0
    }
}

/// Projects all corners, takes the smallest axis-aligned square around them
/// and applies the behind-camera, field-of-view and minimum-width filters.
pub fn crop_region(cam: &CameraModel, t: &TrackState, min_width: f64) -> CropRegion {
    let corners = box_corners(t);
    if corners.iter().any(|c| c.z <= EPSILON_Z) {
        return CropRegion::behind_camera();
    }
    // extremes are taken on the normalized image plane and the intrinsics
    // applied afterwards, so scaling the focal length scales the square exactly
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_x, mut sum_y) = (0.0, 0.0);
    for c in &corners {
        let (x, y) = (c.x / c.z, c.y / c.z);
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
        sum_x += x;
        sum_y += y;
    }
    let extent_u = cam.focal_u * (max_x - min_x);
    let extent_v = cam.focal_v * (max_y - min_y);
    let center_u = cam.focal_u * ((min_x + max_x) / 2.0) + cam.principal_u;
    let center_v = cam.focal_v * ((min_y + max_y) / 2.0) + cam.principal_v;
    let centroid_u = cam.focal_u * (sum_x / 8.0) + cam.principal_u;
    let centroid_v = cam.focal_v * (sum_y / 8.0) + cam.principal_v;

    let invalid_reason = if !cam.contains(centroid_u, centroid_v) || !cam.contains(center_u, center_v) {
        Some(InvalidReason::CentroidOutOfFov)
    } else if extent_u < min_width {
        Some(InvalidReason::BelowMinWidth)
    } else {
        None
    };
    CropRegion {
        center_u,
        center_v,
        side: extent_u.max(extent_v),
        extent_u,
        extent_v,
        centroid_u,
        centroid_v,
        valid: invalid_reason.is_none(),
        invalid_reason,
    }
}

/// Full camera frame, RGB interleaved, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl FrameImage {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height * 3],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f32 {
        self.pixels[(y * self.width + x) * 3 + ch]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Fixed-size classifier input.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePatch {
    pub size: usize,
    /// `size * size * 3`, row-major RGB.
    pub pixels: Vec<f32>,
    pub source_region: CropRegion,
}

impl ImagePatch {
    pub fn new(size: usize, pixels: Vec<f32>, source_region: CropRegion) -> Self {
        debug_assert_eq!(pixels.len(), size * size * 3);
        Self {
            size,
            pixels,
            source_region,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f32 {
        self.pixels[(y * self.size + x) * 3 + ch]
    }

    pub fn max_intensity(&self) -> f32 {
        self.pixels.iter().copied().fold(0.0, f32::max)
    }
}

/// Bilinear tap along one axis: two source indices with weights. Weights of
/// out-of-bounds taps are zero, which zero-fills outside the frame.
#[derive(Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    w0: f32,
    w1: f32,
}

fn taps(origin: f64, scale: f64, n_out: usize, n_src: usize) -> Vec<Tap> {
    (0..n_out)
        .map(|j| {
            // pixel centers of the output grid mapped into source pixel coordinates
            let s = origin + (j as f64 + 0.5) * scale - 0.5;
            let f0 = s.floor();
            let frac = (s - f0) as f32;
            let (x0, x1) = (f0 as i64, f0 as i64 + 1);
            let inside = |x: i64| x >= 0 && (x as usize) < n_src;
            let clamp = |x: i64| x.clamp(0, n_src as i64 - 1) as usize;
            Tap {
                i0: clamp(x0),
                i1: clamp(x1),
                w0: if inside(x0) { 1.0 - frac } else { 0.0 },
                w1: if inside(x1) { frac } else { 0.0 },
            }
        })
        .collect()
}

/// Crops the square region and resizes it to `patch_size` with bilinear
/// interpolation. Source pixels outside the frame read as black.
pub fn extract_patch(image: &FrameImage, region: &CropRegion, patch_size: usize) -> Result<ImagePatch, GeometryError> {
    if !region.valid {
        return Err(GeometryError::InvalidRegion(region.invalid_reason));
    }
    if patch_size == 0 {
        return Err(GeometryError::ZeroPatchSize);
    }
    if image.width == 0 || image.height == 0 {
        return Ok(ImagePatch::new(patch_size, vec![0.0; patch_size * patch_size * 3], *region));
    }
    let scale = region.side / patch_size as f64;
    let xs = taps(region.left(), scale, patch_size, image.width);
    let ys = taps(region.top(), scale, patch_size, image.height);
    let stride = image.width * 3;
    let src = &image.pixels;
    let mut out = vec![0.0f32; patch_size * patch_size * 3];
    for (ty, out_row) in ys.iter().zip(out.chunks_exact_mut(patch_size * 3)) {
        let row0 = &src[ty.i0 * stride..(ty.i0 + 1) * stride];
        let row1 = &src[ty.i1 * stride..(ty.i1 + 1) * stride];
        for (tx, px) in xs.iter().zip(out_row.chunks_exact_mut(3)) {
            let (a, b) = (tx.i0 * 3, tx.i1 * 3);
            let (p00, p01) = (&row0[a..a + 3], &row0[b..b + 3]);
            let (p10, p11) = (&row1[a..a + 3], &row1[b..b + 3]);
            for ch in 0..3 {
                let top = tx.w0 * p00[ch] + tx.w1 * p01[ch];
                let bottom = tx.w0 * p10[ch] + tx.w1 * p11[ch];
                px[ch] = (ty.w0 * top + ty.w1 * bottom).clamp(0.0, 1.0);
            }
        }
    }
    Ok(ImagePatch::new(patch_size, out, *region))
}

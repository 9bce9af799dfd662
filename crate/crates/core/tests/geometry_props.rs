use evdet::geometry::{crop_region, extract_patch, CameraModel, FrameImage, TrackId, TrackState, DEFAULT_MIN_WIDTH, EPSILON_Z};
use proptest::prelude::*;

mod common;
use common::oracle_square;

fn camera() -> impl Strategy<Value = CameraModel> {
    (300.0..3000.0f64, 0.8..1.25f64, 320u32..4000, 240u32..3000)
        .prop_map(|(f, aspect, w, h)| CameraModel::new(f, f * aspect, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap())
}

fn track() -> impl Strategy<Value = TrackState> {
    (
        -30.0..30.0f64,
        -3.0..4.0f64,
        0.5..150.0f64,
        (1.0..20.0f64, 0.5..4.0f64, 0.5..5.0f64),
        -std::f64::consts::PI..std::f64::consts::PI,
    )
        .prop_map(|(x, y, z, (l, w, h), yaw)| TrackState {
            track_id: TrackId(1),
            timestamp: 0.0,
            center_x: x,
            center_y: y,
            center_z: z,
            length: l,
            width: w,
            height: h,
            yaw,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn square_matches_brute_force(cam in camera(), t in track()) {
        let region = crop_region(&cam, &t, DEFAULT_MIN_WIDTH);
        match oracle_square(&cam, &t) {
            None => prop_assert!(!region.valid),
            Some((cu, cv, side)) => {
                prop_assert_eq!(region.center_u.to_bits(), cu.to_bits());
                prop_assert_eq!(region.center_v.to_bits(), cv.to_bits());
                prop_assert_eq!(region.side.to_bits(), side.to_bits());
            }
        }
    }

    #[test]
    fn doubling_focal_doubles_side(cam in camera(), t in track()) {
        let a = crop_region(&cam, &t, 0.0);
        let b = crop_region(&cam.scaled_focal(2.0), &t, 0.0);
        prop_assume!(a.invalid_reason != Some(evdet::geometry::InvalidReason::BehindCamera));
        let want = 2.0 * a.side;
        let ulps = (b.side.to_bits() as i64 - want.to_bits() as i64).abs();
        prop_assert!(ulps <= 1, "side {} vs 2x {} ({} ulps)", b.side, want, ulps);
    }

    #[test]
    fn farther_aligned_box_never_grows(cam in camera(), t in track(), quarter in 0..4u8, dz in 0.0..80.0f64) {
        // only holds for boxes aligned with the camera axes: a long box turned
        // slightly off the viewing ray widens in the image as it recedes
        let t = TrackState { yaw: [0.0, 0.5, -0.5, -1.0][quarter as usize] * std::f64::consts::PI, ..t };
        let near = crop_region(&cam, &t, 0.0);
        prop_assume!(near.invalid_reason.is_none());
        let far = crop_region(&cam, &TrackState { center_z: t.center_z + dz, ..t }, 0.0);
        prop_assert!(far.side <= near.side, "side grew from {} to {}", near.side, far.side);
    }

    #[test]
    fn patch_values_stay_in_unit_range(
        pixels in prop::collection::vec(-0.5f32..1.5, 48 * 32 * 3),
        cu in -20.0..70.0f64,
        cv in -20.0..50.0f64,
        side in 0.5..90.0f64,
        size in 1usize..40,
    ) {
        let frame = FrameImage { width: 48, height: 32, pixels };
        let region = evdet::geometry::CropRegion::square(cu, cv, side);
        let patch = extract_patch(&frame, &region, size).unwrap();
        prop_assert!(patch.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

#[test]
fn corners_near_the_image_plane_are_behind_camera() {
    let t = TrackState {
        track_id: TrackId(3),
        timestamp: 0.0,
        center_x: 0.0,
        center_y: 0.0,
        center_z: 1.0 + EPSILON_Z / 2.0,
        length: 2.0,
        width: 1.0,
        height: 1.0,
        yaw: std::f64::consts::FRAC_PI_2,
    };
    assert!(!crop_region(&CameraModel::default(), &t, 0.0).valid);
}

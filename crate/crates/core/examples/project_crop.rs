//! Project a tracked box into the image, square-crop it and resize the crop.

use evdet::geometry::{crop_region, extract_patch, project_point, CameraModel, FrameImage, Point3, TrackId, TrackState};

fn main() {
    let camera = CameraModel::default();
    let track = TrackState {
        track_id: TrackId(7),
        timestamp: 0.0,
        center_x: 2.5,
        center_y: 0.8,
        center_z: 18.0,
        length: 4.8,
        width: 1.9,
        height: 1.6,
        yaw: 0.4,
    };

    let center = project_point(&camera, Point3::new(track.center_x, track.center_y, track.center_z)).unwrap();
    println!("box center projects to ({:.1}, {:.1})", center.u, center.v);

    let region = crop_region(&camera, &track, 18.0);
    println!(
        "crop: center ({:.1}, {:.1}) side {:.1} px, extents {:.1} x {:.1}, valid {}",
        region.center_u, region.center_v, region.side, region.extent_u, region.extent_v, region.valid
    );

    let frame = FrameImage::filled(camera.image_width as usize, camera.image_height as usize, 0.25);
    let patch = extract_patch(&frame, &region, 224).unwrap();
    println!(
        "patch {}x{} max intensity {:.2}",
        patch.size,
        patch.size,
        patch.max_intensity()
    );

    for z in [60.0, 150.0, 0.05] {
        let far = TrackState { center_z: z, ..track };
        let r = crop_region(&camera, &far, 18.0);
        println!("depth {z:>6} m: valid {} reason {:?}", r.valid, r.invalid_reason);
    }
}

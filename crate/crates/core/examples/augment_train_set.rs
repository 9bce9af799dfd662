//! Rebalance a scene: positives doubled with resampled boxes, negatives cut to 1/5.

use evdet::augmentation::{build_train_set, sample_augmented_box, AugmentConfig, FIELD_NAMES};
use evdet::geometry::CameraModel;
use evdet::simulator::{generate_scene, Provenance, SceneConfig};

fn main() {
    let camera = CameraModel::default();
    let scene = generate_scene(
        &SceneConfig {
            actor_count: 800,
            seed: 5,
            ..Default::default()
        },
        &camera,
        18.0,
    )
    .unwrap();
    let (set, report) = build_train_set(&scene.records, &camera, &AugmentConfig::default(), 5).unwrap();
    println!(
        "positives {} -> {}, negatives {} -> {}",
        report.positives_in, report.positives_out, report.negatives_in, report.negatives_out
    );

    let dist = report.distribution.expect("enough positives to fit");
    for (name, f) in FIELD_NAMES.iter().zip(dist.fields) {
        println!("  {name:<9} mean {:>8.3} std {:>7.3}", f.mean, f.std);
    }
    let b = sample_augmented_box(&dist, 99).unwrap();
    println!(
        "one draw: center ({:.2}, {:.2}, {:.2}) size {:.2} x {:.2} x {:.2}",
        b.center_x, b.center_y, b.center_z, b.length, b.width, b.height
    );

    let augmented = set
        .iter()
        .filter(|r| matches!(r.provenance, Provenance::Augmented { .. }))
        .count();
    println!("{augmented} augmented records, all labels copied from their source");
}

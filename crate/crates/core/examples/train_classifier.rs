//! Train the feature classifier on a simulated scene and save it.
//!
//! Usage: `cargo run --release --example train_classifier [model.json]`

use evdet::augmentation::{build_train_set, AugmentConfig};
use evdet::classifier::{featurize_records, FeatureClassifier, TrainConfig, FEATURE_NAMES};
use evdet::geometry::CameraModel;
use evdet::simulator::{generate_scene, RenderParams, SceneConfig};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "model.json".into());
    let camera = CameraModel::default();
    let scene = generate_scene(
        &SceneConfig {
            actor_count: 600,
            seed: 11,
            scene_id: "train-a".into(),
            ..Default::default()
        },
        &camera,
        18.0,
    )
    .unwrap();

    let (set, report) = build_train_set(&scene.records, &camera, &AugmentConfig::default(), 11).unwrap();
    println!(
        "train set: {} positives, {} negatives",
        report.positives_out, report.negatives_out
    );

    let render = RenderParams {
        patch_size: 32,
        ..Default::default()
    };
    let samples = featurize_records(&set, 0, &render);
    let cfg = TrainConfig {
        initial_lr: 0.05,
        plateau_patience: 50,
        stop_lr: 1e-4,
        ..Default::default()
    };
    let (mut model, fit) = FeatureClassifier::fit(&samples, &cfg).unwrap();
    model.model_version = 1;
    model.training_scenes = vec!["train-a".into()];
    println!(
        "{} iterations, loss {:.5} -> {:.6}, {} lr decays",
        fit.iterations, fit.initial_loss, fit.final_loss, fit.lr_decays
    );
    for (name, w) in FEATURE_NAMES.iter().zip(&model.weights) {
        println!("  {name:<22} {w:+.3}");
    }
    model.save(std::path::Path::new(&out)).unwrap();
    println!("saved {out}");
}

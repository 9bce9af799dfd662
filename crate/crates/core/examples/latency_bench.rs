//! 200 concurrent tracks, full-frame crop and classify, timed per frame.
//!
//! Usage: `cargo run --release --example latency_bench [frames] [threads]`

use evdet::augmentation::{build_train_set, AugmentConfig};
use evdet::bench::{run_bench, BenchConfig};
use evdet::classifier::{featurize_records, FeatureClassifier, TrainConfig};
use evdet::geometry::CameraModel;
use evdet::pipeline::PipelineSettings;
use evdet::simulator::{generate_scene, RenderParams, SceneConfig};

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().unwrap());
    let frames = args.next().unwrap_or(300);
    let threads = args.next().unwrap_or(1);

    let camera = CameraModel::default();
    let render = RenderParams {
        patch_size: 32,
        ..Default::default()
    };
    let train = generate_scene(
        &SceneConfig {
            actor_count: 200,
            scene_id: "bench-train".into(),
            ..Default::default()
        },
        &camera,
        18.0,
    )
    .unwrap();
    let (set, _) = build_train_set(&train.records, &camera, &AugmentConfig::default(), 0).unwrap();
    let cfg = TrainConfig {
        initial_lr: 0.05,
        plateau_patience: 50,
        stop_lr: 1e-4,
        ..Default::default()
    };
    let (model, _) = FeatureClassifier::fit(&featurize_records(&set, 0, &render), &cfg).unwrap();

    let settings = PipelineSettings {
        render,
        threads,
        ..Default::default()
    };
    let bench = BenchConfig {
        frames,
        ..Default::default()
    };
    let report = run_bench(&bench, settings, SceneConfig::default(), Box::new(model)).unwrap();
    println!(
        "{} tracks x {} frames, {} thread(s), {} px patches, {:.0}% valid crops",
        report.tracks_per_frame,
        report.frames,
        report.threads,
        report.patch_size,
        100.0 * report.valid_fraction
    );
    println!(
        "mean {:.2} ms  p99 {:.2} ms  max {:.2} ms  budget {} ms: {}",
        report.latency.mean_ms,
        report.latency.p99_ms,
        report.latency.max_ms,
        report.budget_ms,
        if report.passed { "ok" } else { "over" }
    );
}

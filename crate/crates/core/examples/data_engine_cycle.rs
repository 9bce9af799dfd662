//! One mine, label and retrain round.
//!
//! The first model is trained on a scene without confounding lights, so it
//! fires on brake lights and amber beacons in the logs. Mining those logs
//! and labeling the events feeds the hard negatives back in, and the
//! retrained model is registered as the next version.
//!
//! Usage: `cargo run --release --example data_engine_cycle [registry-dir]`

use std::collections::BTreeSet;
use std::path::PathBuf;

use evdet::classifier::TrainConfig;
use evdet::data_engine::{label_events, mine_with, retrain_cycle, train_on, Dataset, MiningMode, ModelRegistry, RetrainConfig};
use evdet::geometry::CameraModel;
use evdet::simulator::{generate_scene, split_dataset, FrameRecord, SceneConfig};

fn scene(id: &str, actors: usize, confounders: f64, seed: u64) -> Vec<FrameRecord> {
    let cfg = SceneConfig {
        scene_id: id.into(),
        actor_count: actors,
        confounder_fraction: confounders,
        seed,
        ..Default::default()
    };
    generate_scene(&cfg, &CameraModel::default(), 18.0).unwrap().records
}

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("evdet-registry"));
    let camera = CameraModel::default();
    let cfg = RetrainConfig {
        train: TrainConfig {
            initial_lr: 0.05,
            plateau_patience: 50,
            stop_lr: 1e-4,
            max_iterations: 5000,
            ..Default::default()
        },
        patch_size: 32,
        ..Default::default()
    };

    let mut base = scene("base", 400, 0.0, 1);
    split_dataset(&mut base, cfg.split_ratio, cfg.split_seed);
    let mut dataset = Dataset::new(base);
    let (mut v1, _) = train_on(&dataset, &camera, &cfg, &BTreeSet::new()).unwrap();
    v1.model_version = 1;

    let mut registry = ModelRegistry::open(&dir).unwrap();
    registry.register(&v1, "clean scene only").unwrap();

    let mut logs = scene("drive-log", 400, 0.5, 2);
    let holdout = scene("holdout", 300, 0.5, 3);
    let events = mine_with(
        &v1,
        &mut logs,
        cfg.smoother,
        MiningMode::Smoothed,
        v1.model_version,
        &v1.training_scenes,
        cfg.render_seed,
        &cfg.render_params(),
    )
    .unwrap();
    println!("mined {} tracks from {} log frames", events.len(), logs.len());

    let labeled = label_events(&events, &logs).unwrap();
    let cycle = retrain_cycle(&mut dataset, labeled, &v1, &camera, &holdout, &cfg).unwrap();
    println!(
        "added {} records, dataset now {} actors",
        cycle.records_added,
        dataset.actor_count()
    );
    print!("{}\n{}", cycle.before.to_table(), cycle.after.to_table());

    let path = registry.register(&cycle.model, "mined confounders").unwrap();
    println!("registered {}", path.display());
}

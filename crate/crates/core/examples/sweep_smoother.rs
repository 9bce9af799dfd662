//! Score a scene with the synthetic detector and sweep the smoother
//! threshold, reporting per-actor precision and recall against T = 0.

use evdet::classifier::SyntheticClassifier;
use evdet::evaluation::{score_records, sweep_threshold, EvalReport, DEFAULT_RECALL_TARGET, DEFAULT_SWEEP};
use evdet::geometry::CameraModel;
use evdet::simulator::{generate_scene, RenderParams, SceneConfig};
use evdet::smoother::SmootherConfig;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1u64);
    let scene = SceneConfig {
        actor_count: 3000,
        seed,
        ..Default::default()
    };
    let mut records = generate_scene(&scene, &CameraModel::default(), 18.0).unwrap().records;
    let detector = SyntheticClassifier {
        seed,
        ..Default::default()
    };
    score_records(&mut records, &detector, 0, &RenderParams::default()).unwrap();

    let report = EvalReport::build("synthetic", &records, SmootherConfig::default(), DEFAULT_RECALL_TARGET).unwrap();
    print!("{}", report.to_table());
    println!();
    print!(
        "{}",
        sweep_threshold(&records, SmootherConfig::default(), &DEFAULT_SWEEP)
            .unwrap()
            .to_table()
    );
}

//! Replay a simulated log through the online pipeline and write one JSON
//! decision per track per frame.
//!
//! Usage: `cargo run --release --example run_pipeline [decisions.jsonl]`

use evdet::classifier::SyntheticClassifier;
use evdet::geometry::CameraModel;
use evdet::io::write_jsonl;
use evdet::pipeline::{run_log, Pipeline, PipelineSettings};
use evdet::simulator::{generate_scene, SceneConfig};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "decisions.jsonl".into());
    let settings = PipelineSettings::default();
    let records = generate_scene(
        &SceneConfig {
            actor_count: 500,
            seed: 21,
            scene_id: "log-21".into(),
            ..Default::default()
        },
        &CameraModel::default(),
        settings.min_width,
    )
    .unwrap()
    .records;

    // the synthetic detector needs no pixels, so this runs in well under a second
    let mut pipeline = Pipeline::new(settings, Box::new(SyntheticClassifier::default())).unwrap();
    let run = run_log(&mut pipeline, &records, 0, "log-21").unwrap();

    let first_active = run.decisions.iter().find(|d| d.active).map(|d| (d.track_id, d.frame_index));
    println!("{} decisions, first activation {first_active:?}", run.decisions.len());
    println!("latency mean {:.3} ms, p99 {:.3} ms", run.latency.mean_ms, run.latency.p99_ms);
    print!("{}", run.report.to_table());
    write_jsonl(std::path::Path::new(&out), &run.decisions).unwrap();
}

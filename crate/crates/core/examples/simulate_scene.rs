//! Generate a scene and summarize its label statistics.

use evdet::geometry::{CameraModel, DEFAULT_MIN_WIDTH};
use evdet::simulator::{SceneConfig, SceneGenerator};

fn main() {
    let cfg = SceneConfig {
        actor_count: 5000,
        seed: 3,
        ..Default::default()
    };
    let generator = SceneGenerator::new(cfg, CameraModel::default(), DEFAULT_MIN_WIDTH).unwrap();
    println!(
        "flash pattern: period {} frames, all-off fraction {:.4}",
        generator.base_pattern().period,
        generator.base_pattern().all_off_fraction()
    );

    let (mut evs, mut active, mut confounded) = (0, 0, 0);
    let (mut active_frames, mut all_off, mut valid, mut frames) = (0, 0, 0, 0);
    // streamed so that large scenes never sit in memory
    for (actor, records) in generator.iter() {
        evs += actor.vehicle_type.is_ev() as usize;
        active += actor.is_active as usize;
        confounded += actor.confounder.is_some() as usize;
        for r in &records {
            frames += 1;
            valid += r.crop.valid as usize;
            if r.is_active {
                active_frames += 1;
                all_off += !r.bulb_on as usize;
            }
        }
    }
    let n = generator.config().actor_count;
    println!(
        "actors {n}: EV {:.2}%, active {:.1}% of EVs, confounders {confounded}",
        100.0 * evs as f64 / n as f64,
        100.0 * active as f64 / evs.max(1) as f64
    );
    println!(
        "frames {frames}: valid crops {:.1}%, all bulbs off {:.2}% of active frames",
        100.0 * valid as f64 / frames as f64,
        100.0 * all_off as f64 / active_frames.max(1) as f64
    );
}

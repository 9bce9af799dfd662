//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! Built without the libtest harness so the lines print under a plain
//! `cargo test`. Tolerances are the constants below.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use evdet::augmentation::{build_train_set, fit_state_distribution, sample_augmented_box, AugmentConfig};
use evdet::bench::{run_bench, BenchConfig};
use evdet::classifier::{
    featurize_records, focal_loss, FeatureClassifier, FeatureVector, Normalizer, PlateauConfig, PlateauScheduler,
    SyntheticClassifier, TrainConfig, TrainingObjective,
};
use evdet::data_engine::{label_events, mine_with, retrain_cycle, train_on, Dataset, MiningMode, RetrainConfig};
use evdet::evaluation::{score_records, sweep_threshold, DEFAULT_SWEEP};
use evdet::geometry::{crop_region, CameraModel, TrackId, TrackState, DEFAULT_MIN_WIDTH};
use evdet::pipeline::PipelineSettings;
use evdet::simulator::{generate_scene, split_dataset, FrameRecord, RenderParams, SceneConfig, SceneGenerator, CAMERA_HEIGHT};
use evdet::smoother::{smooth_sequence, SmootherConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{gradient_error, oracle_square, recount, samples};

const GEOMETRY_CASES: usize = 10_000;
const GEOMETRY_SECONDS: f64 = 5.0;
#[allow(clippy::approx_constant)]
const LN2: f64 = 0.693147;
const LN2_TOL: f64 = 1e-6;
const CE_GRID: usize = 1000;
/// Relative tolerance between the gamma = 0 loss and weighted cross-entropy.
const CE_REL_TOL: f64 = 1e-12;
const GRAD_POINTS: usize = 100;
const GRAD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-5;
const SMOOTHER_SEQUENCES: usize = 100_000;
const SIM_ACTORS: usize = 100_000;
const SIM_SECONDS: f64 = 60.0;
const EV_FRACTION: (f64, f64) = (0.034, 0.003);
const ACTIVE_FRACTION: (f64, f64) = (0.90, 0.01);
const ALL_OFF_FRACTION: (f64, f64) = (0.082, 0.01);
const SWEEP_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const SWEEP_ACTORS: usize = 3000;
const MAX_RECALL_REGRESSION_PCT: f64 = 2.0;
const MIN_RECALL_DROP_AT_07_PCT: f64 = 5.0;
const REFIT_MEAN_REL_TOL: f64 = 0.01;
const REFIT_STD_REL_TOL: f64 = 0.02;
const REFIT_SAMPLES: u64 = 100_000;
const ENGINE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const BENCH_TRACKS: usize = 200;
const BENCH_FRAMES: usize = 1000;
const BENCH_BUDGET_MS: f64 = 10.0;
const BENCH_PATCH: usize = 32;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_camera(r: &mut ChaCha8Rng) -> CameraModel {
    let (w, h) = (r.random_range(320..4000u32), r.random_range(240..3000u32));
    let f = r.random_range(300.0..3000.0);
    let pu = w as f64 * r.random_range(0.3..0.7);
    let pv = h as f64 * r.random_range(0.3..0.7);
    CameraModel::new(f, f * r.random_range(0.8..1.25), pu, pv, w, h).unwrap()
}

fn random_track(r: &mut ChaCha8Rng) -> TrackState {
    TrackState {
        track_id: TrackId(r.random()),
        timestamp: 0.0,
        center_x: r.random_range(-40.0..40.0),
        center_y: r.random_range(-3.0..4.0),
        center_z: r.random_range(0.5..160.0),
        length: r.random_range(1.0..20.0),
        width: r.random_range(0.5..4.0),
        height: r.random_range(0.5..5.0),
        yaw: r.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    }
}

fn geometry_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let (mut mismatches, mut valid) = (0, 0);
    for _ in 0..GEOMETRY_CASES {
        let cam = random_camera(&mut r);
        let t = random_track(&mut r);
        let region = crop_region(&cam, &t, DEFAULT_MIN_WIDTH);
        valid += region.valid as usize;
        let same = match oracle_square(&cam, &t) {
            Some((cu, cv, side)) => {
                region.center_u.to_bits() == cu.to_bits()
                    && region.center_v.to_bits() == cv.to_bits()
                    && region.side.to_bits() == side.to_bits()
            }
            None => !region.valid,
        };
        mismatches += !same as usize;
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < GEOMETRY_SECONDS,
        format!("{GEOMETRY_CASES} tracks ({valid} valid crops), {mismatches} mismatches, {secs:.3} s"),
    )
}

fn focal_loss_checks() -> Outcome {
    let ln2 = focal_loss(0.5, true, 1.0, 0.0);
    let mut worst_ce = 0.0f64;
    for i in 0..CE_GRID {
        let p = (i as f64 + 0.5) / CE_GRID as f64;
        for (y, alpha) in [(true, 0.25), (false, 0.25)] {
            let ce = if y { -alpha * p.ln() } else { -(1.0 - alpha) * (1.0 - p).ln() };
            worst_ce = worst_ce.max((focal_loss(p, y, alpha, 0.0) - ce).abs() / ce.abs());
        }
    }

    let data: Vec<(FeatureVector, bool)> = samples(400, 3);
    let feats: Vec<FeatureVector> = data.iter().map(|(f, _)| *f).collect();
    let cfg = TrainConfig {
        weight_decay: 1e-3,
        ..Default::default()
    };
    let objective = TrainingObjective::new(&data, &Normalizer::fit(&feats), &cfg);
    let mut r = ChaCha8Rng::seed_from_u64(17);
    let worst_grad = (0..GRAD_POINTS)
        .map(|_| {
            let params: Vec<f64> = (0..TrainingObjective::N_PARAMS).map(|_| r.random_range(-1.0..1.0)).collect();
            gradient_error(&objective, &params, GRAD_STEP)
        })
        .fold(0.0, f64::max);

    outcome(
        (ln2 - LN2).abs() <= LN2_TOL && worst_ce <= CE_REL_TOL && worst_grad <= GRAD_REL_TOL,
        format!("FL(0.5)={ln2:.7}, worst gamma=0 vs CE rel {worst_ce:.1e}, worst gradient rel err {worst_grad:.1e} over {GRAD_POINTS} points"),
    )
}

fn scheduler_trace() -> Outcome {
    let mut s = PlateauScheduler::new(PlateauConfig {
        initial_lr: 1e-4,
        patience: 3,
        decay_factor: 0.5,
        stop_lr: 1e-6,
        min_improvement: 1e-6,
    });
    let mut decays = Vec::new();
    let mut stopped_at = None;
    for step in 1..=100u64 {
        let st = s.step(0.5);
        if st.decayed {
            decays.push(step);
        }
        if st.stop {
            stopped_at = Some(step);
            break;
        }
    }
    let expected: Vec<u64> = (1..=7).map(|k| 4 * k).collect();
    outcome(
        decays == expected && stopped_at == Some(28) && s.decays() == 7,
        format!("decays at {decays:?}, stop at step {stopped_at:?}"),
    )
}

fn smoother_equivalence() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..SMOOTHER_SEQUENCES {
        let n = r.random_range(0..70);
        let p_valid = r.random_range(0.5..1.0);
        let p_pos = r.random::<f64>();
        let seq: Vec<Option<bool>> = (0..n).map(|_| r.random_bool(p_valid).then(|| r.random_bool(p_pos))).collect();
        let threshold = if r.random_bool(0.5) { 0.5 } else { r.random::<f64>() };
        let cfg = SmootherConfig::with_threshold(threshold);
        let scores: Vec<Option<f64>> = seq
            .iter()
            .map(|f| {
                f.map(|b| {
                    if b {
                        r.random_range(0.5..=1.0)
                    } else {
                        r.random_range(0.0..0.5)
                    }
                })
            })
            .collect();
        let out = smooth_sequence(cfg, &scores).unwrap();
        for (i, d) in out.iter().enumerate() {
            if d.active != recount(&seq[..=i], cfg.window, cfg.min_frames, threshold) {
                mismatches += 1;
            }
        }
    }
    let boundary = |positives: usize| {
        let scores: Vec<Option<f64>> = (0..25).map(|i| Some(if i < positives { 0.9 } else { 0.1 })).collect();
        smooth_sequence(SmootherConfig::with_threshold(0.5), &scores).unwrap()[24].active
    };
    let (five, thirteen) = (boundary(5), boundary(13));
    outcome(
        mismatches == 0 && !five && thirteen,
        format!("{SMOOTHER_SEQUENCES} sequences, {mismatches} mismatching decisions; 5/25 -> {five}, 13/25 -> {thirteen}"),
    )
}

fn simulator_statistics() -> Outcome {
    let t0 = Instant::now();
    let cfg = SceneConfig {
        actor_count: SIM_ACTORS,
        seed: 5,
        ..Default::default()
    };
    let generator = SceneGenerator::new(cfg, CameraModel::default(), DEFAULT_MIN_WIDTH).unwrap();
    let (mut evs, mut active, mut active_frames, mut all_off) = (0usize, 0usize, 0usize, 0usize);
    for (actor, records) in generator.iter() {
        evs += actor.vehicle_type.is_ev() as usize;
        active += actor.is_active as usize;
        for r in records.iter().filter(|r| r.is_active) {
            active_frames += 1;
            all_off += !r.bulb_on as usize;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ev = evs as f64 / SIM_ACTORS as f64;
    let act = active as f64 / evs as f64;
    let off = all_off as f64 / active_frames as f64;
    let within = |v: f64, (target, tol): (f64, f64)| (v - target).abs() <= tol;
    outcome(
        within(ev, EV_FRACTION) && within(act, ACTIVE_FRACTION) && within(off, ALL_OFF_FRACTION) && secs < SIM_SECONDS,
        format!(
            "EV {:.3}%, active {:.2}% of EVs, all-off {:.2}% of {active_frames} active frames, {secs:.1} s",
            100.0 * ev,
            100.0 * act,
            100.0 * off
        ),
    )
}

fn sweep_direction() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in SWEEP_SEEDS {
        let cfg = SceneConfig {
            actor_count: SWEEP_ACTORS,
            seed,
            ..Default::default()
        };
        let mut recs = generate_scene(&cfg, &CameraModel::default(), DEFAULT_MIN_WIDTH)
            .unwrap()
            .records;
        let clf = SyntheticClassifier {
            seed,
            fpr: 0.05,
            ..Default::default()
        };
        score_records(&mut recs, &clf, 0, &RenderParams::default()).unwrap();
        let rows = sweep_threshold(&recs, SmootherConfig::default(), &DEFAULT_SWEEP)
            .unwrap()
            .rows;
        let monotone = rows
            .windows(2)
            .all(|w| w[1].metrics.precision >= w[0].metrics.precision && w[1].metrics.recall <= w[0].metrics.recall);
        let base = rows[0].metrics;
        let mid_ok = rows[1..3]
            .iter()
            .all(|row| row.metrics.f1 > base.f1 && row.change.recall.is_some_and(|c| c > -MAX_RECALL_REGRESSION_PCT));
        let drop = rows[3].change.recall.unwrap_or(0.0);
        let ok = monotone && mid_ok && drop < -MIN_RECALL_DROP_AT_07_PCT;
        pass &= ok;
        lines.push(format!(
            "seed {seed}: F1 {:.3}/{:.3}/{:.3}/{:.3} recall {:+.1}%/{:+.1}%/{drop:+.1}%{}",
            rows[0].metrics.f1,
            rows[1].metrics.f1,
            rows[2].metrics.f1,
            rows[3].metrics.f1,
            rows[1].change.recall.unwrap_or(f64::NAN),
            rows[2].change.recall.unwrap_or(f64::NAN),
            if ok { "" } else { " FAIL" }
        ));
    }
    outcome(pass, lines.join("; "))
}

/// Ten positive EVs spread over the adjacent lane and a range of depths.
fn lane_positives(template: &FrameRecord, camera: &CameraModel) -> Vec<FrameRecord> {
    (0..10)
        .map(|i| {
            let f = i as f64;
            let height = 1.45 + 0.03 * f;
            let state = TrackState {
                center_x: 2.5 + 0.35 * f,
                center_y: CAMERA_HEIGHT - height / 2.0,
                center_z: 12.0 + 3.0 * f,
                length: 4.7 + 0.1 * (f % 4.0),
                width: 1.85 + 0.02 * f,
                height,
                ..template.state
            };
            FrameRecord {
                frame_index: i,
                state,
                crop: crop_region(camera, &state, DEFAULT_MIN_WIDTH),
                ..template.clone()
            }
        })
        .collect()
}

fn augmentation_arithmetic() -> Outcome {
    let camera = CameraModel::default();
    let scene = generate_scene(
        &SceneConfig {
            actor_count: 200,
            seed: 7,
            ..Default::default()
        },
        &camera,
        DEFAULT_MIN_WIDTH,
    )
    .unwrap()
    .records;
    let template = scene.iter().find(|r| r.label()).expect("scene has a positive").clone();
    let positives = lane_positives(&template, &camera);
    let mut records: Vec<FrameRecord> = scene.iter().filter(|r| !r.label()).take(100).cloned().collect();
    records.extend(positives.iter().cloned());
    let (set, report) = build_train_set(&records, &camera, &AugmentConfig::default(), 7).unwrap();
    let pos = set.iter().filter(|r| r.label()).count();
    let neg = set.len() - pos;

    let states: Vec<TrackState> = positives.iter().map(|r| r.state).collect();
    let dist = fit_state_distribution(&states).unwrap();
    let draws: Vec<TrackState> = (0..REFIT_SAMPLES)
        .map(|s| sample_augmented_box(&dist, s).unwrap().apply_to(&states[0]))
        .collect();
    let refit = fit_state_distribution(&draws).unwrap();
    let (mut worst_mean, mut worst_std) = (0.0f64, 0.0f64);
    for (a, b) in dist.fields.iter().zip(refit.fields) {
        worst_mean = worst_mean.max((a.mean - b.mean).abs() / a.mean.abs());
        worst_std = worst_std.max((a.std - b.std).abs() / a.std);
    }
    outcome(
        pos == 20 && neg == 20 && report.positives_in == 10 && report.negatives_in == 100 && worst_mean <= REFIT_MEAN_REL_TOL && worst_std <= REFIT_STD_REL_TOL,
        format!(
            "10+100 -> {pos}/{neg} ({} fallback copies); refit over {REFIT_SAMPLES} draws: worst mean rel {:.3}%, worst std rel {:.3}%",
            report.fallback_copies,
            100.0 * worst_mean,
            100.0 * worst_std
        ),
    )
}

fn desk_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        initial_lr: 0.05,
        plateau_patience: 50,
        stop_lr: 1e-4,
        max_iterations: 5000,
        seed,
        ..Default::default()
    }
}

fn engine_improvement() -> Outcome {
    let camera = CameraModel::default();
    let scene = |id: String, actors, confounders, seed| {
        let cfg = SceneConfig {
            scene_id: id,
            actor_count: actors,
            confounder_fraction: confounders,
            seed,
            ..Default::default()
        };
        generate_scene(&cfg, &camera, DEFAULT_MIN_WIDTH).unwrap().records
    };
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in ENGINE_SEEDS {
        let cfg = RetrainConfig {
            train: desk_train_config(seed),
            patch_size: BENCH_PATCH,
            split_seed: seed,
            augment_seed: seed,
            render_seed: seed,
            ..Default::default()
        };
        let mut base = scene(format!("clean-{seed}"), 400, 0.0, seed);
        split_dataset(&mut base, cfg.split_ratio, seed);
        let mut dataset = Dataset::new(base);
        let (mut v1, _) = train_on(&dataset, &camera, &cfg, &BTreeSet::new()).unwrap();
        v1.model_version = 1;

        let test = scene(format!("holdout-{seed}"), 300, 0.5, seed + 1000);
        let mut logs = scene(format!("log-{seed}"), 400, 0.5, seed + 2000);
        let events = mine_with(
            &v1,
            &mut logs,
            cfg.smoother,
            MiningMode::Smoothed,
            1,
            &v1.training_scenes,
            seed,
            &cfg.render_params(),
        )
        .unwrap();
        let labeled = label_events(&events, &logs).unwrap();
        let cycle = retrain_cycle(&mut dataset, labeled, &v1, &camera, &test, &cfg).unwrap();

        let (b, a) = (cycle.before.frame, cycle.after.frame);
        let par = |p: Option<f64>| p.unwrap_or(0.0);
        let ok =
            a.max_f1 > b.max_f1 && a.precision_at_recall.is_some() && par(a.precision_at_recall) > par(b.precision_at_recall);
        pass &= ok;
        lines.push(format!(
            "seed {seed}: max-F1 {:.3}->{:.3}, P@0.8R {}->{}{}",
            b.max_f1,
            a.max_f1,
            b.precision_at_recall.map_or("none".into(), |p| format!("{p:.3}")),
            a.precision_at_recall.map_or("none".into(), |p| format!("{p:.3}")),
            if ok { "" } else { " FAIL" }
        ));
    }
    outcome(pass, lines.join("; "))
}

fn latency_budget() -> Outcome {
    let camera = CameraModel::default();
    let render = RenderParams {
        patch_size: BENCH_PATCH,
        ..Default::default()
    };
    let train = generate_scene(
        &SceneConfig {
            actor_count: 300,
            scene_id: "bench-train".into(),
            seed: 9,
            ..Default::default()
        },
        &camera,
        DEFAULT_MIN_WIDTH,
    )
    .unwrap()
    .records;
    let (set, _) = build_train_set(&train, &camera, &AugmentConfig::default(), 9).unwrap();
    let (model, _) = FeatureClassifier::fit(&featurize_records(&set, 0, &render), &desk_train_config(9)).unwrap();

    let bench = BenchConfig {
        tracks_per_frame: BENCH_TRACKS,
        frames: BENCH_FRAMES,
        budget_ms: BENCH_BUDGET_MS,
        seed: 1,
    };
    let threads = std::thread::available_parallelism().map_or(2, |n| n.get().max(2));
    let mut lines = Vec::new();
    let mut pass = true;
    for t in [1, threads] {
        let settings = PipelineSettings {
            render,
            threads: t,
            ..Default::default()
        };
        let r = run_bench(&bench, settings, SceneConfig::default(), Box::new(model.clone())).unwrap();
        pass &= r.passed;
        lines.push(format!(
            "{} thread(s): mean {:.2} ms, p99 {:.2} ms ({:.0}% valid crops)",
            t,
            r.latency.mean_ms,
            r.latency.p99_ms,
            100.0 * r.valid_fraction
        ));
    }
    outcome(
        pass,
        format!(
            "{BENCH_TRACKS} tracks x {BENCH_FRAMES} frames, {BENCH_PATCH} px: {}",
            lines.join("; ")
        ),
    )
}

fn end_to_end(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/desk.toml");
    let config = config.to_str().unwrap();
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let steps: [Vec<String>; 4] = [
        vec!["simulate".into(), "--out".into(), p("records.jsonl")],
        vec![
            "train".into(),
            "--data".into(),
            p("records.jsonl"),
            "--out".into(),
            p("model.json"),
        ],
        vec![
            "run".into(),
            "--data".into(),
            p("records.jsonl"),
            "--model".into(),
            p("model.json"),
            "--split".into(),
            "test".into(),
            "--report".into(),
            p("run_report.json"),
            "--out".into(),
            p("decisions.jsonl"),
        ],
        vec![
            "evaluate".into(),
            "--data".into(),
            p("records.jsonl"),
            "--model".into(),
            p("model.json"),
            "--split".into(),
            "test".into(),
            "--out".into(),
            p("eval_report.json"),
        ],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_evdet"))
            .args(&args)
            .args(["--config", config, "--seed", "42"])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()));
        }
    }
    [
        "records.jsonl",
        "model.json",
        "decisions.jsonl",
        "run_report.json",
        "eval_report.json",
    ]
    .iter()
    .map(|f| {
        std::fs::read(dir.join(f))
            .map(|b| (f.to_string(), b))
            .map_err(|e| e.to_string())
    })
    .collect()
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (end_to_end(a.path()), end_to_end(b.path())) {
        (Ok(x), Ok(y)) => {
            let differing: Vec<&str> = x
                .iter()
                .zip(&y)
                .filter(|(p, q)| p.1 != q.1)
                .map(|(p, _)| p.0.as_str())
                .collect();
            let bytes: usize = x.iter().map(|f| f.1.len()).sum();
            outcome(
                differing.is_empty(),
                format!("{} files, {bytes} bytes per run, differing: {differing:?}", x.len()),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("geometry oracle", geometry_oracle),
        ("focal loss", focal_loss_checks),
        ("scheduler trace", scheduler_trace),
        ("smoother equivalence", smoother_equivalence),
        ("simulator statistics", simulator_statistics),
        ("smoother sweep direction", sweep_direction),
        ("augmentation arithmetic", augmentation_arithmetic),
        ("data-engine improvement", engine_improvement),
        ("latency budget", latency_budget),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = check();
        failed += !o.pass as usize;
        println!(
            "criterion {}: {} {name} [{:.1} s] {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

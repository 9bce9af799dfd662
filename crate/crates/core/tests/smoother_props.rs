use evdet::smoother::{smooth_sequence, SmootherConfig, TrackSmoother};
use proptest::prelude::*;

mod common;
use common::recount;

fn frames() -> impl Strategy<Value = Vec<Option<bool>>> {
    prop::collection::vec(prop::option::weighted(0.85, any::<bool>()), 0..80)
}

fn scores(seq: &[Option<bool>]) -> Vec<Option<f64>> {
    seq.iter().map(|f| f.map(|b| if b { 0.9 } else { 0.1 })).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn every_prefix_matches_recount(seq in frames(), t in 0.0..1.0f64) {
        let cfg = SmootherConfig::with_threshold(t);
        let out = smooth_sequence(cfg, &scores(&seq)).unwrap();
        for (i, d) in out.iter().enumerate() {
            prop_assert_eq!(d.active, recount(&seq[..=i], cfg.window, cfg.min_frames, t), "prefix {}", i);
        }
    }

    #[test]
    fn lower_threshold_stays_active(seq in frames(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s = scores(&seq);
        let high = smooth_sequence(SmootherConfig::with_threshold(hi), &s).unwrap();
        let low = smooth_sequence(SmootherConfig::with_threshold(lo), &s).unwrap();
        for (h, l) in high.iter().zip(&low) {
            prop_assert!(!h.active || l.active);
        }
    }

    #[test]
    fn lone_positive_never_triggers(n in 6usize..60, at in 0usize..60, gaps in prop::collection::vec(0usize..60, 0..5), t in (1.0 / 6.0)..1.0f64) {
        let mut seq: Vec<Option<bool>> = (0..n).map(|i| Some(i == at % n)).collect();
        for g in gaps {
            let g = g % seq.len();
            seq.insert(g, None);
        }
        let out = smooth_sequence(SmootherConfig::with_threshold(t), &scores(&seq)).unwrap();
        prop_assert!(out.iter().all(|d| !d.active));
    }

    #[test]
    fn eviction_is_first_in_first_out(seq in prop::collection::vec(any::<bool>(), 26..70)) {
        let cfg = SmootherConfig::default();
        let mut s = TrackSmoother::new(cfg).unwrap();
        for (i, &b) in seq.iter().enumerate() {
            let d = s.push_and_decide(Some(if b { 1.0 } else { 0.0 }));
            let start = (i + 1).saturating_sub(cfg.window);
            let expected = seq[start..=i].iter().filter(|&&x| x).count();
            prop_assert_eq!(d.positives, expected);
            prop_assert_eq!(d.frames, (i + 1).min(cfg.window));
        }
    }
}

#[test]
fn invalid_frames_do_not_count_toward_the_minimum() {
    let mut seq = vec![None; 30];
    seq.extend([Some(0.9); 6]);
    let out = smooth_sequence(SmootherConfig::default(), &seq).unwrap();
    assert!(out[..35].iter().all(|d| !d.active));
    assert!(out[35].active);
}

#[test]
fn reset_forgets_history() {
    let mut s = TrackSmoother::new(SmootherConfig::default()).unwrap();
    for _ in 0..10 {
        s.push(Some(1.0));
    }
    assert!(s.decide().active);
    s.reset();
    assert_eq!(s.decide().frames, 0);
    assert!(!s.decide().active);
}

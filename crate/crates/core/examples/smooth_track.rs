use evdet::smoother::{smooth_sequence, SmootherConfig};

fn main() {
    // a flashing beacon seen at 10 Hz: one dark frame in every twelve, plus
    // two frames where the track left the image
    let mut scores: Vec<Option<f64>> = (0..40).map(|i| Some(if i % 12 == 11 { 0.1 } else { 0.93 })).collect();
    scores[8] = None;
    scores[9] = None;

    for t in [0.0, 0.5, 0.95] {
        let decisions = smooth_sequence(SmootherConfig::with_threshold(t), &scores).unwrap();
        let trace: String = decisions.iter().map(|d| if d.active { '#' } else { '.' }).collect();
        println!("T={t:<4} {trace}");
    }
}

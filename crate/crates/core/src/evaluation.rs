//! Frame-level precision/recall analysis and actor-level smoother sweeps.
//!
//! Percent changes are relative: `(new - old) / old * 100`, undefined
//! (`None`) when `old` is zero.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{classify_record, Classifier, ClassifierError};
use crate::geometry::TrackId;
use crate::simulator::{FrameRecord, RenderParams};
use crate::smoother::{SmootherConfig, SmootherError, TrackSmoother};

pub const DEFAULT_RECALL_TARGET: f64 = 0.8;
pub const DEFAULT_SWEEP: [f64; 4] = [0.0, 0.3, 0.5, 0.7];
pub const CHANGE_CONVENTION: &str = "relative_percent";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need both classes (positives {positives}, negatives {negatives})")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("no operating point reaches recall {0}")]
    UnreachableRecall(f64),
    #[error("empty curve")]
    EmptyCurve,
    #[error("record {scene_id}/{track_id} frame {frame_index} has a valid crop but no score")]
    MissingScore {
        scene_id: String,
        track_id: TrackId,
        frame_index: u64,
    },
    #[error(transparent)]
    Smoother(#[from] SmootherError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One operating point per distinct score, predicting positive when
/// `score >= threshold`. Points are ordered by increasing threshold.
pub fn pr_curve(scored: &[(f64, bool)]) -> Result<Vec<PrPoint>, EvalError> {
    let positives = scored.iter().filter(|(_, y)| *y).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::DegenerateLabels { positives, negatives });
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    // walk from the highest score down, emitting a point after each group
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, positives);
        points.push(PrPoint {
            threshold: t,
            precision,
            recall,
            f1: f1(precision, recall),
            tp,
            fp,
            fn_: positives - tp,
            tn: negatives - fp,
        });
    }
    points.reverse();
    Ok(points)
}

/// The point with the largest F1; ties go to the higher threshold.
pub fn max_f1(curve: &[PrPoint]) -> Result<PrPoint, EvalError> {
    curve
        .iter()
        .rev()
        .copied()
        .reduce(|best, p| if p.f1 > best.f1 { p } else { best })
        .ok_or(EvalError::EmptyCurve)
}

pub fn precision_at_recall(curve: &[PrPoint], target: f64) -> Result<f64, EvalError> {
    if curve.is_empty() {
        return Err(EvalError::EmptyCurve);
    }
    curve
        .iter()
        .filter(|p| p.recall >= target)
        .map(|p| p.precision)
        .reduce(f64::max)
        .ok_or(EvalError::UnreachableRecall(target))
}

/// `(score, label)` for every record with a valid crop.
pub fn scored_frames(records: &[FrameRecord]) -> Result<Vec<(f64, bool)>, EvalError> {
    records
        .iter()
        .filter(|r| r.crop.valid)
        .map(|r| match r.score {
            Some(s) => Ok((s, r.label())),
            None => Err(missing(r)),
        })
        .collect()
}

fn missing(r: &FrameRecord) -> EvalError {
    EvalError::MissingScore {
        scene_id: r.scene_id.clone(),
        track_id: r.track_id,
        frame_index: r.frame_index,
    }
}

/// Fills `score` on every record with a valid crop and clears it elsewhere.
pub fn score_records(
    records: &mut [FrameRecord],
    clf: &dyn Classifier,
    render_seed: u64,
    params: &RenderParams,
) -> Result<(), ClassifierError> {
    for r in records.iter_mut() {
        r.score = if r.crop.valid {
            Some(classify_record(clf, r, render_seed, params)?.probability())
        } else {
            None
        };
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frames: usize,
    pub positives: usize,
    pub max_f1: f64,
    pub max_f1_threshold: f64,
    pub recall_target: f64,
    /// `None` when no operating point reaches the target recall.
    pub precision_at_recall: Option<f64>,
}

pub fn frame_metrics(scored: &[(f64, bool)], recall_target: f64) -> Result<(FrameMetrics, Vec<PrPoint>), EvalError> {
    let curve = pr_curve(scored)?;
    let best = max_f1(&curve)?;
    let par = match precision_at_recall(&curve, recall_target) {
        Ok(p) => Some(p),
        Err(EvalError::UnreachableRecall(_)) => None,
        Err(e) => return Err(e),
    };
    Ok((
        FrameMetrics {
            frames: scored.len(),
            positives: scored.iter().filter(|(_, y)| *y).count(),
            max_f1: best.f1,
            max_f1_threshold: best.threshold,
            recall_target,
            precision_at_recall: par,
        },
        curve,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorOutcome {
    pub truth_active: bool,
    pub predicted_active: bool,
    /// First frame index at which the smoother turned active.
    pub first_active_frame: Option<u64>,
}

/// Replays the smoother over each actor's frames in frame order.
pub fn actor_outcomes(
    records: &[FrameRecord],
    cfg: SmootherConfig,
) -> Result<BTreeMap<(String, TrackId), ActorOutcome>, EvalError> {
    let mut by_actor: BTreeMap<(String, TrackId), Vec<&FrameRecord>> = BTreeMap::new();
    for r in records {
        by_actor.entry(r.actor_key()).or_default().push(r);
    }
    let mut out = BTreeMap::new();
    for (key, mut frames) in by_actor {
        frames.sort_by_key(|r| r.frame_index);
        let mut s = TrackSmoother::new(cfg)?;
        let mut first = None;
        for r in &frames {
            let score = if r.crop.valid {
                Some(r.score.ok_or_else(|| missing(r))?)
            } else {
                None
            };
            if s.push_and_decide(score).active && first.is_none() {
                first = Some(r.frame_index);
            }
        }
        let truth = frames[0].vehicle_type.is_ev() && frames[0].is_active;
        out.insert(
            key,
            ActorOutcome {
                truth_active: truth,
                predicted_active: first.is_some(),
                first_active_frame: first,
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorMetrics {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

pub fn per_actor_metrics(records: &[FrameRecord], cfg: SmootherConfig) -> Result<ActorMetrics, EvalError> {
    let outcomes = actor_outcomes(records, cfg)?;
    let mut m = ActorMetrics {
        threshold: cfg.threshold,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for o in outcomes.values() {
        match (o.truth_active, o.predicted_active) {
            (true, true) => m.tp += 1,
            (false, true) => m.fp += 1,
            (true, false) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn_);
    m.f1 = f1(m.precision, m.recall);
    Ok(m)
}

pub fn relative_change(new: f64, old: f64) -> Option<f64> {
    (old != 0.0).then(|| (new - old) / old * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentChange {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub metrics: ActorMetrics,
    /// Relative to the first row.
    pub change: PercentChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub convention: String,
    pub rows: Vec<SweepRow>,
}

/// Per-actor metrics at each smoother threshold; changes are against the
/// first threshold's row.
pub fn sweep_threshold(records: &[FrameRecord], base: SmootherConfig, thresholds: &[f64]) -> Result<SweepReport, EvalError> {
    let metrics = thresholds
        .iter()
        .map(|&t| per_actor_metrics(records, SmootherConfig { threshold: t, ..base }))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = metrics
        .iter()
        .map(|m| {
            let b = &metrics[0];
            SweepRow {
                metrics: *m,
                change: PercentChange {
                    precision: relative_change(m.precision, b.precision),
                    recall: relative_change(m.recall, b.recall),
                    f1: relative_change(m.f1, b.f1),
                },
            }
        })
        .collect();
    Ok(SweepReport {
        convention: CHANGE_CONVENTION.into(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameChange {
    pub max_f1: Option<f64>,
    pub precision_at_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub convention: String,
    pub frame: FrameMetrics,
    pub actor: ActorMetrics,
    pub curve: Vec<PrPoint>,
    /// Present only when a baseline report was attached.
    pub baseline: Option<String>,
    pub change: Option<FrameChange>,
}

impl EvalReport {
    pub fn build(name: &str, records: &[FrameRecord], smoother: SmootherConfig, recall_target: f64) -> Result<Self, EvalError> {
        let (frame, curve) = frame_metrics(&scored_frames(records)?, recall_target)?;
        Ok(Self {
            name: name.into(),
            convention: CHANGE_CONVENTION.into(),
            frame,
            actor: per_actor_metrics(records, smoother)?,
            curve,
            baseline: None,
            change: None,
        })
    }

    pub fn with_baseline(mut self, baseline: &EvalReport) -> Self {
        let opt = |new: Option<f64>, old: Option<f64>| relative_change(new?, old?);
        self.change = Some(FrameChange {
            max_f1: relative_change(self.frame.max_f1, baseline.frame.max_f1),
            precision_at_recall: opt(self.frame.precision_at_recall, baseline.frame.precision_at_recall),
        });
        self.baseline = Some(baseline.name.clone());
        self
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:+.2}%"));
        let _ = writeln!(s, "report {}", self.name);
        let _ = writeln!(
            s,
            "frames {}  positives {}  max-F1 {:.4} @ {:.4}",
            self.frame.frames, self.frame.positives, self.frame.max_f1, self.frame.max_f1_threshold
        );
        let _ = writeln!(
            s,
            "precision at {:.2} recall: {}",
            self.frame.recall_target,
            self.frame
                .precision_at_recall
                .map_or("unreachable".into(), |p| format!("{p:.4}"))
        );
        if let (Some(b), Some(c)) = (&self.baseline, &self.change) {
            let _ = writeln!(s, "vs {b} ({CHANGE_CONVENTION})");
            let _ = writeln!(s, "  % change of max-F1                     {}", pct(c.max_f1));
            let _ = writeln!(
                s,
                "  % change of precision at {:.1} recall    {}",
                self.frame.recall_target,
                pct(c.precision_at_recall)
            );
        }
        let a = &self.actor;
        let _ = writeln!(
            s,
            "actors T={:.2}: precision {:.4} recall {:.4} f1 {:.4} (tp {} fp {} fn {} tn {})",
            a.threshold, a.precision, a.recall, a.f1, a.tp, a.fp, a.fn_, a.tn
        );
        s
    }
}

impl SweepReport {
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:+.2}%"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>6} | {:>9} {:>9} {:>9} | {:>12} {:>12} {:>12}",
            "T", "precision", "recall", "f1", "% chg prec", "% chg recall", "% chg f1"
        );
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{:>5.0}% | {:>9.4} {:>9.4} {:>9.4} | {:>12} {:>12} {:>12}",
                m.threshold * 100.0,
                m.precision,
                m.recall,
                m.f1,
                pct(r.change.precision),
                pct(r.change.recall),
                pct(r.change.f1)
            );
        }
        s
    }
}

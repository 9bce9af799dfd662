use serde::{Deserialize, Serialize};

use super::{FrameRecord, Split};
use crate::geometry::TrackId;
use crate::rng;

/// Train:test ratio in integer parts, e.g. `3:1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub test: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self { train: 3, test: 1 }
    }
}

impl SplitRatio {
    pub fn train_fraction(&self) -> f64 {
        let total = self.train + self.test;
        if total == 0 {
            1.0
        } else {
            self.train as f64 / total as f64
        }
    }
}

/// Split for one actor. Independent of record order, so an actor keeps its
/// split no matter which data set it later appears in.
pub fn assign_split(scene_id: &str, track_id: TrackId, ratio: SplitRatio, seed: u64) -> Split {
    let u = rng::unit(rng::mix(&[seed, rng::hash_str(scene_id), track_id.0, 0x5917]));
    if u < ratio.train_fraction() {
        Split::Train
    } else {
        Split::Test
    }
}

/// Assigns splits per actor: all frames of one actor share a split.
pub fn split_dataset(records: &mut [FrameRecord], ratio: SplitRatio, seed: u64) {
    for r in records.iter_mut() {
        r.split = Some(assign_split(&r.scene_id, r.track_id, ratio, seed));
    }
}

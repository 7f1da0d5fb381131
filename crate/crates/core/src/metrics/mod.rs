//! Endpoint-error metrics over predicted flow fields.
//!
//! `average_epe` is the plain per-point mean; the threeway split separates
//! moving foreground, stationary foreground and background so that the vast
//! static majority cannot mask failures on moving objects; the
//! [`bucket`] submodule goes further and normalizes error by speed.

pub mod bucket;

use crate::boxes::Box3D;
use crate::cloud::FlowField;
use crate::gtflow::GroundTruthFlow;
use crate::taxonomy::ClassId;
use bucket::FixedSum;
use serde::{Deserialize, Serialize};

pub use bucket::{
    mean_summary, BucketConfig, BucketDetail, BucketMatrix, ClassSummary, MeanSummary, MergeError,
};

/// Speed above which a foreground point counts as dynamic, in m/s. The
/// comparison is strict: exactly this speed is still static.
pub const DEFAULT_SPEED_SPLIT: f64 = 0.5;

/// Mean L2 endpoint error over the points selected by `mask` that are valid
/// in both ground truth and prediction. `None` when nothing qualifies.
pub fn average_epe(pred: &FlowField, gt: &GroundTruthFlow, mask: &[bool]) -> Option<f64> {
    assert_eq!(pred.len(), gt.len());
    assert_eq!(mask.len(), gt.len());
    let mut sum = 0.0;
    let mut n = 0u64;
    #[allow(clippy::needless_range_loop)] // indexes three parallel arrays
    for i in 0..gt.len() {
        if mask[i] && gt.flow.valid[i] && pred.valid[i] {
            sum += (pred.vectors[i] - gt.flow.vectors[i]).norm();
            n += 1;
        }
    }
    if n == 0 {
        None
    } else {
        Some(sum / n as f64)
    }
}

/// The three point populations of the threeway split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreewayCategory {
    ForegroundDynamic,
    ForegroundStatic,
    BackgroundStatic,
}

/// Mergeable accumulator for the threeway endpoint error.
///
/// Uses the same fixed-point sums as the bucket matrix, so partial results
/// merge exactly regardless of how the input was partitioned.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreewayAccumulator {
    background: ClassId,
    speed_split: f64,
    counts: [u64; 3],
    epe_sums: [FixedSum; 3],
}

/// Average EPE per category plus their mean. Empty categories are `None` and
/// drop out of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreewayResult {
    pub foreground_dynamic_epe: Option<f64>,
    pub foreground_static_epe: Option<f64>,
    pub background_static_epe: Option<f64>,
    pub mean: Option<f64>,
    pub counts: [u64; 3],
}

impl ThreewayAccumulator {
    pub fn new(background: ClassId, speed_split: f64) -> Self {
        ThreewayAccumulator {
            background,
            speed_split,
            counts: [0; 3],
            epe_sums: [FixedSum::ZERO; 3],
        }
    }

    pub fn category(&self, class: ClassId, speed: f64) -> ThreewayCategory {
        if class == self.background {
            ThreewayCategory::BackgroundStatic
        } else if speed > self.speed_split {
            ThreewayCategory::ForegroundDynamic
        } else {
            ThreewayCategory::ForegroundStatic
        }
    }

    pub fn accumulate(&mut self, pred: &FlowField, gt: &GroundTruthFlow) {
        assert_eq!(pred.len(), gt.len());
        for i in 0..gt.len() {
            if !gt.included(i) || !pred.valid[i] {
                continue;
            }
            let cat = self.category(gt.class_per_point[i], gt.speed_per_point[i]) as usize;
            self.counts[cat] += 1;
            self.epe_sums[cat] += FixedSum::quantize((pred.vectors[i] - gt.flow.vectors[i]).norm());
        }
    }

    /// Exact cell-wise merge; panics if the two accumulators were configured
    /// differently (that is a caller bug, not a data condition).
    pub fn merge(&mut self, other: &ThreewayAccumulator) {
        assert_eq!(self.background, other.background);
        assert_eq!(self.speed_split, other.speed_split);
        for k in 0..3 {
            self.counts[k] += other.counts[k];
            self.epe_sums[k] += other.epe_sums[k];
        }
    }

    pub fn finalize(&self) -> ThreewayResult {
        let avg = |k: usize| self.epe_sums[k].mean(self.counts[k]);
        let parts = [avg(0), avg(1), avg(2)];
        let defined: Vec<f64> = parts.iter().flatten().copied().collect();
        ThreewayResult {
            foreground_dynamic_epe: parts[0],
            foreground_static_epe: parts[1],
            background_static_epe: parts[2],
            mean: if defined.is_empty() {
                None
            } else {
                Some(defined.iter().sum::<f64>() / defined.len() as f64)
            },
            counts: self.counts,
        }
    }
}

/// Single-shot threeway evaluation of one frame pair.
pub fn threeway_epe(
    pred: &FlowField,
    gt: &GroundTruthFlow,
    background: ClassId,
    speed_split: f64,
) -> ThreewayResult {
    let mut acc = ThreewayAccumulator::new(background, speed_split);
    acc.accumulate(pred, gt);
    acc.finalize()
}

/// Volume below which a box counts as SMALL, in cubic meters.
pub const SMALL_VOLUME_LIMIT: f64 = 9.5;
/// Volume at or above which a box counts as LARGE, in cubic meters.
pub const LARGE_VOLUME_LIMIT: f64 = 40.0;

/// Relabels boxes into the semantics-free size taxonomy by volume:
/// SMALL below 9.5 m³, LARGE from 40 m³ up, MEDIUM in between. Evaluating
/// against these labels needs no semantic annotations at all.
pub fn size_bucket_classes(boxes: &[Box3D]) -> Vec<Box3D> {
    boxes
        .iter()
        .map(|b| {
            let v = b.volume();
            let label = if v < SMALL_VOLUME_LIMIT {
                "SMALL"
            } else if v < LARGE_VOLUME_LIMIT {
                "MEDIUM"
            } else {
                "LARGE"
            };
            let mut out = b.clone();
            out.class = label.to_string();
            out
        })
        .collect()
}

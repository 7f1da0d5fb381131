//! Speed-bucketed, class-aware endpoint-error accumulation.
//!
//! The matrix keeps one cell per (meta-class, speed bucket) with a point
//! count, an endpoint-error sum and a ground-truth displacement sum. Sums are
//! stored as fixed-point integers so that merging partial matrices is exact
//! and associative: any partition of the input over any number of workers
//! yields bit-identical totals, which keeps reports reproducible.

use crate::cloud::FlowField;
use crate::gtflow::GroundTruthFlow;
use crate::taxonomy::{ClassId, Taxonomy};
use serde::{Deserialize, Serialize};
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use thiserror::Error;

const SCALE_BITS: u32 = 40;
const SCALE: f64 = (1u64 << SCALE_BITS) as f64;

/// Fixed-point meter sum with 2^-40 resolution (~9e-13 m).
///
/// Each contribution is rounded once at quantization; integer addition is
/// then exact, so the total is independent of summation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct FixedSum(i128);

impl FixedSum {
    pub const ZERO: FixedSum = FixedSum(0);

    pub fn quantize(v: f64) -> FixedSum {
        FixedSum((v * SCALE).round() as i128)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE
    }

    pub fn raw(self) -> i128 {
        self.0
    }

    /// `self / other` computed on the raw integers, so equal sums divide to
    /// exactly 1.0.
    pub fn ratio(self, other: FixedSum) -> Option<f64> {
        if other.0 == 0 {
            None
        } else {
            Some(self.0 as f64 / other.0 as f64)
        }
    }

    /// Mean over `count` contributions.
    pub fn mean(self, count: u64) -> Option<f64> {
        if count == 0 {
            None
        } else {
            Some(self.to_f64() / count as f64)
        }
    }
}

impl Add for FixedSum {
    type Output = FixedSum;
    fn add(self, rhs: FixedSum) -> FixedSum {
        FixedSum(self.0 + rhs.0)
    }
}

impl AddAssign for FixedSum {
    fn add_assign(&mut self, rhs: FixedSum) {
        self.0 += rhs.0;
    }
}

impl Sum for FixedSum {
    fn sum<I: Iterator<Item = FixedSum>>(iter: I) -> FixedSum {
        iter.fold(FixedSum::ZERO, Add::add)
    }
}

/// Speed bucketing: fixed-width buckets from zero up to `max_speed`, plus one
/// open-ended bucket for everything at or above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketConfig {
    /// Bucket width in m/s.
    pub bucket_width: f64,
    /// Lower edge of the final, open-ended bucket, in m/s.
    pub max_speed: f64,
}

impl Default for BucketConfig {
    fn default() -> Self {
        BucketConfig { bucket_width: 0.4, max_speed: 20.0 }
    }
}

impl BucketConfig {
    /// Number of buckets including the open-ended one. The defaults give 51.
    pub fn bucket_count(&self) -> usize {
        (self.max_speed / self.bucket_width).round() as usize + 1
    }

    /// Maps a speed in m/s to its bucket index; lower edges are inclusive.
    pub fn bucket_index(&self, speed: f64) -> usize {
        let last = self.bucket_count() - 1;
        ((speed / self.bucket_width).floor() as usize).min(last)
    }

    /// `[lo, hi)` speed range of bucket `b`; `hi` is `None` for the last.
    pub fn bucket_range(&self, b: usize) -> (f64, Option<f64>) {
        let lo = b as f64 * self.bucket_width;
        if b + 1 == self.bucket_count() {
            (lo, None)
        } else {
            (lo, Some(lo + self.bucket_width))
        }
    }
}

/// One (class, bucket) cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BucketCell {
    pub count: u64,
    pub epe_sum: FixedSum,
    pub gt_disp_sum: FixedSum,
}

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("cannot merge matrices with different taxonomies ({0:?} vs {1:?})")]
    TaxonomyMismatch(Vec<String>, Vec<String>),
    #[error("cannot merge matrices with different bucket configs")]
    ConfigMismatch,
    #[error("cannot merge matrices with different nominal dt ({0} vs {1})")]
    DtMismatch(f64, f64),
}

/// Accumulated (class, speed bucket) error matrix for one or more frame
/// pairs. Cells are laid out class-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketMatrix {
    taxonomy: Taxonomy,
    config: BucketConfig,
    /// Nominal frame spacing in seconds; metadata echoed into reports and
    /// checked on merge so mixed-rate accumulations fail loudly.
    nominal_dt: f64,
    cells: Vec<BucketCell>,
}

impl BucketMatrix {
    pub fn new(taxonomy: Taxonomy, config: BucketConfig, nominal_dt: f64) -> Self {
        let cells = vec![BucketCell::default(); taxonomy.len() * config.bucket_count()];
        BucketMatrix { taxonomy, config, nominal_dt, cells }
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn config(&self) -> &BucketConfig {
        &self.config
    }

    pub fn nominal_dt(&self) -> f64 {
        self.nominal_dt
    }

    pub fn cell(&self, class: ClassId, bucket: usize) -> &BucketCell {
        &self.cells[class.0 as usize * self.config.bucket_count() + bucket]
    }

    fn cell_mut(&mut self, class: ClassId, bucket: usize) -> &mut BucketCell {
        &mut self.cells[class.0 as usize * self.config.bucket_count() + bucket]
    }

    pub fn total_points(&self) -> u64 {
        self.cells.iter().map(|c| c.count).sum()
    }

    /// Adds every point that is valid in the ground truth, inside the
    /// evaluation mask, and valid in the prediction.
    pub fn accumulate(&mut self, pred: &FlowField, gt: &GroundTruthFlow) {
        assert_eq!(pred.len(), gt.len(), "prediction/ground-truth length mismatch");
        for i in 0..gt.len() {
            if !gt.included(i) || !pred.valid[i] {
                continue;
            }
            let class = gt.class_per_point[i];
            debug_assert!((class.0 as usize) < self.taxonomy.len());
            let bucket = self.config.bucket_index(gt.speed_per_point[i]);
            let epe = (pred.vectors[i] - gt.flow.vectors[i]).norm();
            let disp = gt.flow.vectors[i].norm();
            let cell = self.cell_mut(class, bucket);
            cell.count += 1;
            cell.epe_sum += FixedSum::quantize(epe);
            cell.gt_disp_sum += FixedSum::quantize(disp);
        }
    }

    /// Adds another matrix cell-wise. Exact: merging partials in any grouping
    /// or order gives identical totals.
    pub fn merge(&mut self, other: &BucketMatrix) -> Result<(), MergeError> {
        if self.taxonomy != other.taxonomy {
            return Err(MergeError::TaxonomyMismatch(
                self.taxonomy.names().to_vec(),
                other.taxonomy.names().to_vec(),
            ));
        }
        if self.config != other.config {
            return Err(MergeError::ConfigMismatch);
        }
        if self.nominal_dt != other.nominal_dt {
            return Err(MergeError::DtMismatch(self.nominal_dt, other.nominal_dt));
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.count += b.count;
            a.epe_sum += b.epe_sum;
            a.gt_disp_sum += b.gt_disp_sum;
        }
        Ok(())
    }

    /// Per-class summaries in class-id order.
    pub fn summarize(&self) -> Vec<ClassSummary> {
        self.taxonomy
            .ids()
            .map(|class| {
                let buckets: Vec<BucketDetail> = (0..self.config.bucket_count())
                    .map(|b| {
                        let cell = self.cell(class, b);
                        let (speed_lo, speed_hi) = self.config.bucket_range(b);
                        BucketDetail {
                            bucket: b,
                            speed_lo,
                            speed_hi,
                            count: cell.count,
                            avg_epe: cell.epe_sum.mean(cell.count),
                            avg_gt_disp: cell.gt_disp_sum.mean(cell.count),
                            normalized_epe: if cell.count == 0 {
                                None
                            } else {
                                cell.epe_sum.ratio(cell.gt_disp_sum)
                            },
                        }
                    })
                    .collect();
                let static_epe = buckets[0].avg_epe;
                let dynamic: Vec<f64> =
                    buckets[1..].iter().filter_map(|d| d.normalized_epe).collect();
                let dynamic_normalized_epe = if dynamic.is_empty() {
                    None
                } else {
                    Some(dynamic.iter().sum::<f64>() / dynamic.len() as f64)
                };
                ClassSummary {
                    class,
                    name: self.taxonomy.name(class).to_string(),
                    point_count: buckets.iter().map(|d| d.count).sum(),
                    static_epe,
                    dynamic_normalized_epe,
                    buckets,
                }
            })
            .collect()
    }
}

/// One row of the per-bucket breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketDetail {
    pub bucket: usize,
    pub speed_lo: f64,
    /// `None` for the open-ended final bucket.
    pub speed_hi: Option<f64>,
    pub count: u64,
    pub avg_epe: Option<f64>,
    pub avg_gt_disp: Option<f64>,
    /// Endpoint-error sum over ground-truth displacement sum; `None` when
    /// the bucket is empty or all its displacements are zero.
    pub normalized_epe: Option<f64>,
}

/// Per-class rollup of the bucket matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: ClassId,
    pub name: String,
    pub point_count: u64,
    /// Average EPE of the lowest bucket; `None` when it is empty.
    pub static_epe: Option<f64>,
    /// Unweighted mean of normalized EPE over non-empty moving buckets, so a
    /// rare fast pedestrian counts as much as a common cruising car.
    pub dynamic_normalized_epe: Option<f64>,
    pub buckets: Vec<BucketDetail>,
}

/// Cross-class means. Both static variants are reported because published
/// summaries are ambiguous about whether the background row participates;
/// `mean_static_epe` includes every class, `_foreground` drops the
/// background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSummary {
    pub mean_static_epe: Option<f64>,
    pub mean_static_epe_foreground: Option<f64>,
    pub mean_dynamic_normalized_epe: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Unweighted means across classes. Classes whose entry is undefined (no
/// points in the relevant buckets) are skipped rather than treated as zero.
pub fn mean_summary(summaries: &[ClassSummary], background: ClassId) -> MeanSummary {
    MeanSummary {
        mean_static_epe: mean_of(summaries.iter().filter_map(|s| s.static_epe)),
        mean_static_epe_foreground: mean_of(
            summaries.iter().filter(|s| s.class != background).filter_map(|s| s.static_epe),
        ),
        mean_dynamic_normalized_epe: mean_of(
            summaries.iter().filter_map(|s| s.dynamic_normalized_epe),
        ),
    }
}

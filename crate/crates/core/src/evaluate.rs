//! Dataset-level evaluation: ground truth from annotations, predictions from
//! flow files, metrics merged across sequences into one report.
//!
//! Sequences are processed in parallel; per-sequence results are merged in
//! sorted-name order using exactly-mergeable accumulators, so the final
//! report is byte-identical for any thread count and for any grouping of
//! sequences into partial evaluations.

use crate::gtflow::{
    class_point_histogram, generate_gt_flow, radius_mask, transform_cloud_to_global,
    AnnotatedFrame, GtFlowError, GtFlowParams,
};
use crate::io::binfile::{self, BinFileError};
use crate::io::dataset::{self, DatasetError, SequenceData};
use crate::io::report::{ReportConfig, ReportDocument, REPORT_SCHEMA_VERSION};
use crate::metrics::{
    mean_summary, size_bucket_classes, BucketConfig, BucketMatrix, MergeError, ThreewayAccumulator,
    DEFAULT_SPEED_SPLIT,
};
use crate::taxonomy::ClassMap;
use rayon::prelude::*;
use std::path::Path;
use thiserror::Error;

/// Default planar evaluation radius around the ego vehicle, in meters.
pub const DEFAULT_EVAL_RADIUS: f64 = 35.0;
/// Default frame spacing assumed when converting displacement to speed for
/// bucket edges, in seconds.
pub const DEFAULT_NOMINAL_DT: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub eval_radius: f64,
    pub nominal_dt: f64,
    pub bucket: BucketConfig,
    pub speed_split: f64,
    pub class_map: ClassMap,
    /// Regroup boxes by physical volume (small/medium/large) instead of
    /// semantic class before metrics.
    pub use_size_buckets: bool,
    pub containment_margin: f64,
}

impl EvalConfig {
    pub fn semantic() -> Self {
        EvalConfig {
            eval_radius: DEFAULT_EVAL_RADIUS,
            nominal_dt: DEFAULT_NOMINAL_DT,
            bucket: BucketConfig::default(),
            speed_split: DEFAULT_SPEED_SPLIT,
            class_map: ClassMap::default_semantic(),
            use_size_buckets: false,
            containment_margin: 0.0,
        }
    }

    pub fn size_buckets() -> Self {
        EvalConfig {
            class_map: ClassMap::size_buckets(),
            use_size_buckets: true,
            ..EvalConfig::semantic()
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig::semantic()
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Bin(#[from] BinFileError),
    #[error("sequence `{sequence}`, frame {frame}: {source}")]
    GtFlow {
        sequence: String,
        frame: u64,
        #[source]
        source: GtFlowError,
    },
    #[error(
        "sequence `{sequence}`, frame {frame}: flow has {got} vectors but the cloud has {expected} points"
    )]
    FlowLengthMismatch { sequence: String, frame: u64, got: usize, expected: usize },
    #[error(transparent)]
    Merge(#[from] MergeError),
}

/// Mergeable evaluation state. Merging partial accumulators in the same
/// sequence order as a monolithic run reproduces its report byte for byte.
#[derive(Debug, Clone)]
pub struct EvalAccumulator {
    pub matrix: BucketMatrix,
    pub threeway: ThreewayAccumulator,
    pub histogram: Vec<u64>,
    pub sequences: Vec<String>,
    pub missing_predictions: Vec<String>,
    pub warnings: Vec<String>,
}

impl EvalAccumulator {
    pub fn new(config: &EvalConfig) -> Self {
        let taxonomy = config.class_map.taxonomy().clone();
        EvalAccumulator {
            threeway: ThreewayAccumulator::new(taxonomy.background(), config.speed_split),
            histogram: vec![0; taxonomy.len()],
            matrix: BucketMatrix::new(taxonomy, config.bucket.clone(), config.nominal_dt),
            sequences: Vec::new(),
            missing_predictions: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn merge(&mut self, other: &EvalAccumulator) -> Result<(), MergeError> {
        self.matrix.merge(&other.matrix)?;
        self.threeway.merge(&other.threeway);
        for (h, o) in self.histogram.iter_mut().zip(&other.histogram) {
            *h += o;
        }
        self.sequences.extend(other.sequences.iter().cloned());
        self.missing_predictions.extend(other.missing_predictions.iter().cloned());
        self.warnings.extend(other.warnings.iter().cloned());
        Ok(())
    }

    pub fn into_report(self, config: &EvalConfig) -> ReportDocument {
        let taxonomy = config.class_map.taxonomy();
        let classes = self.matrix.summarize();
        let mean = mean_summary(&classes, taxonomy.background());
        let total_points_evaluated = classes.iter().map(|c| c.point_count).sum();
        ReportDocument {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: ReportConfig {
                eval_radius: config.eval_radius,
                nominal_dt: config.nominal_dt,
                bucket_width: config.bucket.bucket_width,
                max_speed: config.bucket.max_speed,
                speed_split: config.speed_split,
                classes: taxonomy.names().to_vec(),
                background_class: taxonomy.name(taxonomy.background()).to_string(),
                size_buckets: config.use_size_buckets,
            },
            sequences: self.sequences,
            point_histogram: self.histogram,
            total_points_evaluated,
            threeway: self.threeway.finalize(),
            classes,
            mean,
            missing_predictions: self.missing_predictions,
        }
    }
}

fn annotated_frame(
    seq: &SequenceData,
    index: usize,
    dt_to_next: f64,
    config: &EvalConfig,
) -> AnnotatedFrame {
    let rec = &seq.frames[index];
    let boxes =
        if config.use_size_buckets { size_bucket_classes(&rec.boxes) } else { rec.boxes.clone() };
    AnnotatedFrame {
        cloud: transform_cloud_to_global(&rec.cloud_sensor, &rec.ego_pose),
        boxes,
        ego_position: rec.ego_pose.translation,
        dt_to_next,
    }
}

/// Evaluates one loaded sequence against its prediction files. Missing flow
/// files are recorded (and the pair skipped), not fatal; a flow file of the
/// wrong length is an error.
pub fn evaluate_sequence(
    seq: &SequenceData,
    pred_root: &Path,
    config: &EvalConfig,
) -> Result<EvalAccumulator, EvalError> {
    let mut acc = EvalAccumulator::new(config);
    acc.sequences.push(seq.name.clone());
    acc.warnings.extend(seq.warnings.iter().cloned());
    let params = GtFlowParams { containment_margin: config.containment_margin };
    let taxonomy = config.class_map.taxonomy().clone();

    for i in 0..seq.frames.len().saturating_sub(1) {
        let dt = seq.frames[i + 1].timestamp - seq.frames[i].timestamp;
        let frame_id = seq.frames[i].frame_id;
        let frame_t = annotated_frame(seq, i, dt, config);
        let frame_t1 = annotated_frame(seq, i + 1, dt, config);

        let flow_file = dataset::flow_path(pred_root, &seq.name, frame_id);
        if !flow_file.is_file() {
            acc.missing_predictions.push(format!("{}/{:06}", seq.name, frame_id));
            acc.warnings
                .push(format!("sequence `{}`, frame {frame_id}: no prediction file", seq.name));
            continue;
        }
        let pred = binfile::load_flow(&flow_file)?;
        if pred.len() != frame_t.cloud.len() {
            return Err(EvalError::FlowLengthMismatch {
                sequence: seq.name.clone(),
                frame: frame_id,
                got: pred.len(),
                expected: frame_t.cloud.len(),
            });
        }

        let mut gt = generate_gt_flow(&frame_t, &frame_t1, &config.class_map, &params).map_err(
            |source| EvalError::GtFlow { sequence: seq.name.clone(), frame: frame_id, source },
        )?;
        for (h, c) in
            acc.histogram.iter_mut().zip(class_point_histogram(std::iter::once(&gt), &taxonomy))
        {
            *h += c;
        }
        gt.restrict_eval_mask(&radius_mask(
            &frame_t.cloud,
            frame_t.ego_position,
            config.eval_radius,
        ));
        acc.matrix.accumulate(&pred, &gt);
        acc.threeway.accumulate(&pred, &gt);
    }
    Ok(acc)
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub report: ReportDocument,
    pub warnings: Vec<String>,
}

/// Loads and evaluates the named sequences (in the given order) and merges
/// their accumulators in that same order.
pub fn evaluate_named_sequences(
    data_root: &Path,
    pred_root: &Path,
    names: &[String],
    config: &EvalConfig,
) -> Result<EvalAccumulator, EvalError> {
    let partials: Vec<EvalAccumulator> = names
        .par_iter()
        .map(|name| {
            let seq = dataset::load_sequence(data_root, name)?;
            evaluate_sequence(&seq, pred_root, config)
        })
        .collect::<Result<_, EvalError>>()?;
    let mut acc = EvalAccumulator::new(config);
    for partial in &partials {
        acc.merge(partial)?;
    }
    Ok(acc)
}

/// Evaluates every sequence under `data_root` against predictions under
/// `pred_root` and assembles the report.
pub fn evaluate_dataset(
    data_root: &Path,
    pred_root: &Path,
    config: &EvalConfig,
) -> Result<EvalOutcome, EvalError> {
    let names = dataset::list_sequences(data_root)?;
    let acc = evaluate_named_sequences(data_root, pred_root, names.as_slice(), config)?;
    let warnings = acc.warnings.clone();
    Ok(EvalOutcome { report: acc.into_report(config), warnings })
}

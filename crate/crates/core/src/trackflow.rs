//! Scene flow from a detect-then-track pipeline.
//!
//! Instead of estimating per-point motion directly, run an off-the-shelf
//! detector, associate detections into tracks, and emit the rigid motion of
//! each tracked box as the flow of every point inside it. Points outside all
//! boxes get zero flow, which is exactly right for the static background that
//! dominates lidar scenes.

use crate::boxes::{select_containing_box, Box3D};
use crate::cloud::{FlowField, PointCloud};
use crate::geometry::{SE3Pose, Vec3};
use crate::gtflow::transform_cloud_to_global;
use crate::tracker::{Tracker, TrackerConfig, TrackerError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackflowConfig {
    pub tracker: TrackerConfig,
    /// Containment margin in meters when gathering points into tracked
    /// boxes. Tracked boxes are noisier than annotations, so this is looser
    /// than the zero margin used for ground truth.
    pub containment_margin: f64,
    /// Use the Kalman-filtered box for flow extraction (default). When
    /// false, the raw matched detection is used instead and filtering only
    /// provides association and coasting.
    pub use_filtered_boxes: bool,
}

impl Default for TrackflowConfig {
    fn default() -> Self {
        TrackflowConfig {
            tracker: TrackerConfig::default(),
            containment_margin: 0.1,
            use_filtered_boxes: true,
        }
    }
}

/// One input frame: sensor-frame cloud, ego pose, and detections already in
/// the global frame. The cloud timestamp orders the sequence.
#[derive(Debug, Clone)]
pub struct TrackflowFrame {
    pub cloud_sensor: PointCloud,
    pub ego_pose: SE3Pose,
    pub detections: Vec<Box3D>,
}

#[derive(Debug, Error)]
pub enum TrackflowError {
    #[error("timestamps must increase strictly; frame {frame} does not advance")]
    NonMonotonicTimestamps { frame: u64 },
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

/// Drops detections whose confidence is strictly below `threshold`.
pub fn filter_detections(detections: &[Box3D], threshold: f64) -> Vec<Box3D> {
    detections.iter().filter(|d| d.confidence >= threshold).cloned().collect()
}

/// Two consecutive frames of tracked boxes plus the earlier cloud, all in
/// the global frame. Boxes must carry track ids.
#[derive(Debug, Clone)]
pub struct TrackedFramePair {
    pub boxes_t: Vec<Box3D>,
    pub boxes_t1: Vec<Box3D>,
    pub cloud_t: PointCloud,
}

/// Per-point flow for one frame pair: the rigid box motion for points inside
/// a surviving track, zero everywhere else. Overlaps go to the smallest box
/// (then higher confidence, then lower track id).
pub fn tracks_to_flow(pair: &TrackedFramePair, margin: f64) -> FlowField {
    let next_by_track: HashMap<u64, &Box3D> =
        pair.boxes_t1.iter().filter_map(|b| b.track_id.map(|id| (id, b))).collect();
    let motions: Vec<Option<SE3Pose>> = pair
        .boxes_t
        .iter()
        .map(|b| {
            let id = b.track_id?;
            let next = next_by_track.get(&id)?;
            Some(b.relative_transform(next).expect("same track id"))
        })
        .collect();

    let vectors: Vec<Vec3> = pair
        .cloud_t
        .points
        .iter()
        .map(|&p| match select_containing_box(&pair.boxes_t, p, margin) {
            Some(i) => match &motions[i] {
                Some(t) => t.apply(p) - p,
                None => Vec3::ZERO, // track ends here; predict no motion
            },
            None => Vec3::ZERO, // background
        })
        .collect();
    let n = vectors.len();
    FlowField::new(vectors, vec![true; n])
}

/// Output of [`run_trackflow_detailed`]: the per-pair flow fields plus how
/// many confirmed tracks were emitted at each frame.
#[derive(Debug)]
pub struct TrackflowRun {
    pub flows: Vec<FlowField>,
    pub tracked_boxes_per_frame: Vec<usize>,
}

/// Runs the whole pipeline over a sequence: confidence filter, ego
/// compensation, tracking, per-pair flow extraction. Returns one flow field
/// per consecutive frame pair (empty for sequences shorter than two frames).
pub fn run_trackflow(
    frames: &[TrackflowFrame],
    config: &TrackflowConfig,
) -> Result<Vec<FlowField>, TrackflowError> {
    run_trackflow_detailed(frames, config).map(|run| run.flows)
}

/// Like [`run_trackflow`] but also reports per-frame track counts.
pub fn run_trackflow_detailed(
    frames: &[TrackflowFrame],
    config: &TrackflowConfig,
) -> Result<TrackflowRun, TrackflowError> {
    for w in frames.windows(2) {
        if w[1].cloud_sensor.timestamp <= w[0].cloud_sensor.timestamp {
            return Err(TrackflowError::NonMonotonicTimestamps {
                frame: w[1].cloud_sensor.frame_id,
            });
        }
    }

    let clouds_global: Vec<PointCloud> =
        frames.iter().map(|f| transform_cloud_to_global(&f.cloud_sensor, &f.ego_pose)).collect();

    let mut tracker = Tracker::new(config.tracker.clone());
    let mut boxes_per_frame: Vec<Vec<Box3D>> = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let dt = if i == 0 {
            // no tracks exist yet, any positive value works
            0.1
        } else {
            frame.cloud_sensor.timestamp - frames[i - 1].cloud_sensor.timestamp
        };
        let filtered = filter_detections(&frame.detections, config.tracker.confidence_threshold);
        let tracked = tracker.step(&filtered, dt)?;
        let boxes = tracked
            .into_iter()
            .map(|tb| {
                if config.use_filtered_boxes {
                    tb.box3d
                } else {
                    // raw detections carry the track id; coasted tracks have
                    // no detection and fall back to the filtered box
                    tb.raw_detection.unwrap_or(tb.box3d)
                }
            })
            .collect();
        boxes_per_frame.push(boxes);
    }

    let flows = (0..frames.len().saturating_sub(1))
        .map(|i| {
            let pair = TrackedFramePair {
                boxes_t: boxes_per_frame[i].clone(),
                boxes_t1: boxes_per_frame[i + 1].clone(),
                cloud_t: clouds_global[i].clone(),
            };
            tracks_to_flow(&pair, config.containment_margin)
        })
        .collect();
    Ok(TrackflowRun {
        flows,
        tracked_boxes_per_frame: boxes_per_frame.iter().map(Vec::len).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gtflow::{generate_gt_flow, AnnotatedFrame, GtFlowParams};
    use crate::taxonomy::ClassMap;
    use proptest::prelude::*;

    fn boxed(center: Vec3, dims: (f64, f64, f64), conf: f64, id: Option<u64>) -> Box3D {
        Box3D::new(center, dims, 0.0, "CAR", conf, id).unwrap()
    }

    #[test]
    fn filter_keeps_at_or_above_threshold() {
        let dets = vec![
            boxed(Vec3::ZERO, (1.0, 1.0, 1.0), 0.1, None),
            boxed(Vec3::ZERO, (1.0, 1.0, 1.0), 0.2, None),
            boxed(Vec3::ZERO, (1.0, 1.0, 1.0), 0.9, None),
        ];
        let kept = filter_detections(&dets, 0.2);
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().all(|d| d.confidence >= 0.2));
    }

    #[test]
    fn flow_is_box_motion_inside_and_zero_outside() {
        let pair = TrackedFramePair {
            boxes_t: vec![boxed(Vec3::ZERO, (4.0, 2.0, 2.0), 0.9, Some(1))],
            boxes_t1: vec![boxed(Vec3::new(1.0, 0.0, 0.0), (4.0, 2.0, 2.0), 0.9, Some(1))],
            cloud_t: PointCloud {
                points: vec![Vec3::new(0.5, 0.3, 0.0), Vec3::new(10.0, 0.0, 0.0)],
                frame_id: 0,
                timestamp: 0.0,
            },
        };
        let flow = tracks_to_flow(&pair, 0.1);
        assert!((flow.vectors[0] - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(flow.vectors[1], Vec3::ZERO);
        assert!(flow.valid.iter().all(|&v| v));
    }

    #[test]
    fn margin_widens_containment() {
        let pair = TrackedFramePair {
            boxes_t: vec![boxed(Vec3::ZERO, (4.0, 2.0, 2.0), 0.9, Some(1))],
            boxes_t1: vec![boxed(Vec3::new(1.0, 0.0, 0.0), (4.0, 2.0, 2.0), 0.9, Some(1))],
            cloud_t: PointCloud {
                // 5 cm beyond the half extent in x
                points: vec![Vec3::new(2.05, 0.0, 0.0)],
                frame_id: 0,
                timestamp: 0.0,
            },
        };
        assert_eq!(tracks_to_flow(&pair, 0.0).vectors[0], Vec3::ZERO);
        assert!((tracks_to_flow(&pair, 0.1).vectors[0] - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ending_track_contributes_zero_flow() {
        let pair = TrackedFramePair {
            boxes_t: vec![boxed(Vec3::ZERO, (4.0, 2.0, 2.0), 0.9, Some(1))],
            boxes_t1: vec![],
            cloud_t: PointCloud {
                points: vec![Vec3::new(0.5, 0.0, 0.0)],
                frame_id: 0,
                timestamp: 0.0,
            },
        };
        let flow = tracks_to_flow(&pair, 0.1);
        assert_eq!(flow.vectors[0], Vec3::ZERO);
    }

    #[test]
    fn overlapping_boxes_resolved_to_smallest() {
        let big = boxed(Vec3::ZERO, (4.0, 2.0, 2.0), 0.9, Some(1));
        let small = boxed(Vec3::ZERO, (1.0, 1.0, 1.0), 0.9, Some(2));
        let big_next = boxed(Vec3::new(1.0, 0.0, 0.0), (4.0, 2.0, 2.0), 0.9, Some(1));
        let small_next = boxed(Vec3::new(0.0, 0.5, 0.0), (1.0, 1.0, 1.0), 0.9, Some(2));
        let pair = TrackedFramePair {
            boxes_t: vec![big, small],
            boxes_t1: vec![big_next, small_next],
            cloud_t: PointCloud {
                points: vec![Vec3::new(0.2, 0.0, 0.0)],
                frame_id: 0,
                timestamp: 0.0,
            },
        };
        let flow = tracks_to_flow(&pair, 0.0);
        assert!((flow.vectors[0] - Vec3::new(0.0, 0.5, 0.0)).norm() < 1e-12);
    }

    /// A car at 10 m/s and a pedestrian at 1 m/s, sampled with a handful of
    /// body points each plus static background points.
    fn demo_frames(drop_detection_at: Option<usize>) -> Vec<TrackflowFrame> {
        let car_offsets =
            [Vec3::new(1.0, 0.5, 0.0), Vec3::new(-1.2, -0.4, 0.3), Vec3::new(0.0, 0.0, 0.0)];
        let ped_offsets = [Vec3::new(0.1, 0.1, 0.2), Vec3::new(-0.1, 0.0, -0.3)];
        let bg = [Vec3::new(20.0, 20.0, 0.0), Vec3::new(-15.0, 5.0, 1.0)];
        (0..8)
            .map(|i| {
                let t = i as f64 * 0.1;
                let car_center = Vec3::new(t * 10.0, 0.0, 0.5);
                let ped_center = Vec3::new(5.0, 10.0 - t, 0.9);
                let mut points: Vec<Vec3> = car_offsets.iter().map(|&o| car_center + o).collect();
                points.extend(ped_offsets.iter().map(|&o| ped_center + o));
                points.extend(bg);
                let mut detections = vec![
                    Box3D::new(car_center, (4.0, 2.0, 1.6), 0.0, "CAR", 0.9, None).unwrap(),
                    Box3D::new(ped_center, (0.7, 0.7, 1.8), 0.0, "PEDESTRIAN", 0.8, None).unwrap(),
                ];
                if drop_detection_at == Some(i) {
                    detections.remove(0);
                }
                TrackflowFrame {
                    cloud_sensor: PointCloud { points, frame_id: i as u64, timestamp: t },
                    ego_pose: SE3Pose::identity(),
                    detections,
                }
            })
            .collect()
    }

    #[test]
    fn pipeline_with_raw_boxes_reproduces_ground_truth_flow() {
        let frames = demo_frames(None);
        let config = TrackflowConfig { use_filtered_boxes: false, ..Default::default() };
        let flows = run_trackflow(&frames, &config).unwrap();
        assert_eq!(flows.len(), 7);

        // annotate the same scene: the detections are perfect, so with raw
        // boxes the pipeline must match the annotation-derived flow exactly
        let annotated: Vec<AnnotatedFrame> = frames
            .iter()
            .map(|f| AnnotatedFrame {
                cloud: f.cloud_sensor.clone(),
                boxes: f
                    .detections
                    .iter()
                    .enumerate()
                    .map(|(k, d)| {
                        let mut b = d.clone();
                        b.track_id = Some(k as u64);
                        b
                    })
                    .collect(),
                ego_position: Vec3::ZERO,
                dt_to_next: 0.1,
            })
            .collect();
        let map = ClassMap::default_semantic();
        for i in 0..flows.len() {
            let gt =
                generate_gt_flow(&annotated[i], &annotated[i + 1], &map, &GtFlowParams::default())
                    .unwrap();
            for k in 0..gt.len() {
                let err = (flows[i].vectors[k] - gt.flow.vectors[k]).norm();
                assert!(err < 1e-12, "pair {i} point {k}: err {err}");
            }
        }
    }

    #[test]
    fn pipeline_with_filtered_boxes_converges() {
        let frames = demo_frames(None);
        let flows = run_trackflow(&frames, &TrackflowConfig::default()).unwrap();
        // after a few frames the filters have locked on; car points (first 3)
        // must move ~1.0 m per frame, background (last 2) exactly 0
        for (i, flow) in flows.iter().enumerate().skip(4) {
            for k in 0..3 {
                let err = (flow.vectors[k] - Vec3::new(1.0, 0.0, 0.0)).norm();
                assert!(err < 0.1, "pair {i} car point {k}: err {err}");
            }
            for k in 5..7 {
                assert_eq!(flow.vectors[k], Vec3::ZERO, "pair {i} background {k}");
            }
        }
    }

    #[test]
    fn coasted_track_still_produces_flow() {
        // the car detection disappears at frame 5; the tracker coasts it, so
        // car points still receive approximately correct flow
        let frames = demo_frames(Some(5));
        let flows = run_trackflow(&frames, &TrackflowConfig::default()).unwrap();
        for pair_idx in [4usize, 5] {
            for k in 0..3 {
                let err = (flows[pair_idx].vectors[k] - Vec3::new(1.0, 0.0, 0.0)).norm();
                assert!(err < 0.2, "pair {pair_idx} car point {k}: err {err}");
            }
        }
    }

    #[test]
    fn non_monotonic_timestamps_rejected() {
        let mut frames = demo_frames(None);
        frames[3].cloud_sensor.timestamp = frames[2].cloud_sensor.timestamp;
        let err = run_trackflow(&frames, &TrackflowConfig::default()).unwrap_err();
        assert!(matches!(err, TrackflowError::NonMonotonicTimestamps { frame: 3 }));
    }

    #[test]
    fn short_sequences_produce_no_flow() {
        let frames = demo_frames(None);
        assert!(run_trackflow(&frames[..1], &TrackflowConfig::default()).unwrap().is_empty());
        assert!(run_trackflow(&[], &TrackflowConfig::default()).unwrap().is_empty());
    }

    proptest! {
        // lowering the threshold only ever adds detections, never removes
        #[test]
        fn filter_is_monotone_in_threshold(
            confs in proptest::collection::vec(0.0..1.0f64, 0..30),
            t_lo in 0.0..1.0f64,
            t_hi in 0.0..1.0f64,
        ) {
            let (t_lo, t_hi) = if t_lo <= t_hi { (t_lo, t_hi) } else { (t_hi, t_lo) };
            let dets: Vec<Box3D> = confs
                .iter()
                .map(|&c| boxed(Vec3::ZERO, (1.0, 1.0, 1.0), c, None))
                .collect();
            let loose = filter_detections(&dets, t_lo);
            let strict = filter_detections(&dets, t_hi);
            // every strictly-filtered detection also passes the loose filter
            for d in &strict {
                prop_assert!(loose.iter().any(|l| l.confidence == d.confidence));
            }
            prop_assert!(loose.len() >= strict.len());
        }
    }
}

//! Ground-truth rigid flow from box tracks.
//!
//! Given two annotated frames whose clouds share a global (ego-compensated)
//! frame, every point inside a tracked box inherits that track's rigid motion;
//! everything else is background with exactly zero flow. Points whose box
//! track ends between the frames carry no usable label and are marked invalid.

use crate::boxes::{select_containing_box, Box3D};
use crate::cloud::{FlowField, PointCloud};
use crate::geometry::{SE3Pose, Vec3};
use crate::taxonomy::{ClassId, ClassMap, Taxonomy, TaxonomyError};
use std::collections::HashMap;
use thiserror::Error;

/// One frame of annotations: global-frame cloud, tracked boxes, ego position.
#[derive(Debug, Clone)]
pub struct AnnotatedFrame {
    pub cloud: PointCloud,
    pub boxes: Vec<Box3D>,
    pub ego_position: Vec3,
    /// Seconds until the next frame; must be positive.
    pub dt_to_next: f64,
}

/// Per-point ground truth for one frame pair: rigid flow, meta-class, speed
/// in m/s, and the evaluation mask (starts all-true, narrowed by radius).
#[derive(Debug, Clone)]
pub struct GroundTruthFlow {
    pub flow: FlowField,
    pub class_per_point: Vec<ClassId>,
    pub speed_per_point: Vec<f64>,
    pub eval_mask: Vec<bool>,
}

impl GroundTruthFlow {
    pub fn len(&self) -> usize {
        self.flow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flow.is_empty()
    }

    /// ANDs `mask` into the evaluation mask.
    pub fn restrict_eval_mask(&mut self, mask: &[bool]) {
        assert_eq!(mask.len(), self.eval_mask.len());
        for (m, &r) in self.eval_mask.iter_mut().zip(mask) {
            *m = *m && r;
        }
    }

    /// True iff the point participates in metrics.
    pub fn included(&self, i: usize) -> bool {
        self.flow.valid[i] && self.eval_mask[i]
    }
}

#[derive(Debug, Error)]
pub enum GtFlowError {
    #[error("dt_to_next must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("duplicate track id {0} within one frame")]
    DuplicateTrackId(u64),
    #[error("annotated box without track id (class `{0}`)")]
    MissingTrackId(String),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

#[derive(Debug, Clone)]
pub struct GtFlowParams {
    /// Containment margin in meters; annotations are tight so this defaults
    /// to zero.
    pub containment_margin: f64,
}

impl Default for GtFlowParams {
    fn default() -> Self {
        GtFlowParams { containment_margin: 0.0 }
    }
}

/// Moves a sensor-frame cloud into the global frame. A static world point
/// observed from two ego poses gets identical global coordinates, so its
/// ground-truth flow is the zero vector.
pub fn transform_cloud_to_global(cloud: &PointCloud, ego_pose: &SE3Pose) -> PointCloud {
    cloud.transformed(ego_pose)
}

fn index_tracks(boxes: &[Box3D]) -> Result<HashMap<u64, &Box3D>, GtFlowError> {
    let mut map = HashMap::with_capacity(boxes.len());
    for b in boxes {
        let id = b.track_id.ok_or_else(|| GtFlowError::MissingTrackId(b.class.clone()))?;
        if map.insert(id, b).is_some() {
            return Err(GtFlowError::DuplicateTrackId(id));
        }
    }
    Ok(map)
}

/// Generates per-point rigid flow for the pair `(frame_t, frame_t1)`.
///
/// Overlapping boxes are resolved in favor of the smallest volume; a point in
/// a box whose track has no successor at `t+1` is marked invalid rather than
/// zero-flow, which would mislabel a dynamic point as static.
pub fn generate_gt_flow(
    frame_t: &AnnotatedFrame,
    frame_t1: &AnnotatedFrame,
    class_map: &ClassMap,
    params: &GtFlowParams,
) -> Result<GroundTruthFlow, GtFlowError> {
    let dt = frame_t.dt_to_next;
    if dt <= 0.0 {
        return Err(GtFlowError::NonPositiveDt(dt));
    }
    index_tracks(&frame_t.boxes)?;
    let next_by_track = index_tracks(&frame_t1.boxes)?;

    let background = class_map.taxonomy().background();
    // per box at t: meta-class and (if the track survives) the rigid motion
    let mut motions: Vec<(ClassId, Option<SE3Pose>)> = Vec::with_capacity(frame_t.boxes.len());
    for b in &frame_t.boxes {
        let class = class_map.lookup(&b.class)?;
        let motion = next_by_track
            .get(&b.track_id.unwrap())
            .map(|next| b.relative_transform(next).expect("same track id"));
        motions.push((class, motion));
    }

    let n = frame_t.cloud.len();
    let mut vectors = vec![Vec3::ZERO; n];
    let mut valid = vec![true; n];
    let mut classes = vec![background; n];
    let mut speeds = vec![0.0; n];

    for (i, &p) in frame_t.cloud.points.iter().enumerate() {
        let Some(box_idx) = select_containing_box(&frame_t.boxes, p, params.containment_margin)
        else {
            continue; // background: zero flow, valid
        };
        let (class, motion) = &motions[box_idx];
        classes[i] = *class;
        match motion {
            Some(t) => {
                let f = t.apply(p) - p;
                vectors[i] = f;
                speeds[i] = f.norm() / dt;
            }
            None => {
                // track ends here; no label for this point
                valid[i] = false;
            }
        }
    }

    Ok(GroundTruthFlow {
        flow: FlowField::new(vectors, valid),
        class_per_point: classes,
        speed_per_point: speeds,
        eval_mask: vec![true; n],
    })
}

/// True iff the planar (x, y) distance from `ego_position` is at most
/// `max_radius`. Height is deliberately ignored.
pub fn radius_mask(cloud: &PointCloud, ego_position: Vec3, max_radius: f64) -> Vec<bool> {
    cloud.points.iter().map(|p| p.planar_distance(&ego_position) <= max_radius).collect()
}

/// Total valid-point count per meta-class across all frames.
pub fn class_point_histogram<'a>(
    frames: impl IntoIterator<Item = &'a GroundTruthFlow>,
    taxonomy: &Taxonomy,
) -> Vec<u64> {
    let mut counts = vec![0u64; taxonomy.len()];
    for gt in frames {
        for (i, &class) in gt.class_per_point.iter().enumerate() {
            if gt.flow.valid[i] {
                counts[class.0 as usize] += 1;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::wrap_angle;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn car_box(center: Vec3, yaw: f64, track_id: u64) -> Box3D {
        Box3D::new(center, (4.0, 2.0, 1.6), yaw, "CAR", 1.0, Some(track_id)).unwrap()
    }

    fn frame(points: Vec<Vec3>, boxes: Vec<Box3D>, frame_id: u64, dt: f64) -> AnnotatedFrame {
        AnnotatedFrame {
            cloud: PointCloud { points, frame_id, timestamp: frame_id as f64 * dt },
            boxes,
            ego_position: Vec3::ZERO,
            dt_to_next: dt,
        }
    }

    fn class_map() -> ClassMap {
        ClassMap::default_semantic()
    }

    #[test]
    fn empty_scene_is_all_background() {
        let points = vec![Vec3::new(1.0, 2.0, 0.0), Vec3::new(-3.0, 0.5, 0.2)];
        let f0 = frame(points.clone(), vec![], 0, 0.1);
        let f1 = frame(points, vec![], 1, 0.1);
        let map = class_map();
        let gt = generate_gt_flow(&f0, &f1, &map, &GtFlowParams::default()).unwrap();
        let bg = map.taxonomy().background();
        for i in 0..gt.len() {
            assert_eq!(gt.flow.vectors[i], Vec3::ZERO);
            assert_eq!(gt.class_per_point[i], bg);
            assert!(gt.flow.valid[i]);
            assert_eq!(gt.speed_per_point[i], 0.0);
        }
    }

    #[test]
    fn translating_box_moves_contained_points() {
        let points: Vec<Vec3> =
            (0..10).map(|i| Vec3::new(i as f64 * 0.3 - 1.5, 0.4, 0.1)).collect();
        let b0 = car_box(Vec3::ZERO, 0.0, 5);
        let b1 = car_box(Vec3::new(1.0, 0.0, 0.0), 0.0, 5);
        let f0 = frame(points.clone(), vec![b0], 0, 0.1);
        let f1 = frame(points, vec![b1], 1, 0.1);
        let gt = generate_gt_flow(&f0, &f1, &class_map(), &GtFlowParams::default()).unwrap();
        for i in 0..gt.len() {
            assert!((gt.flow.vectors[i] - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
            assert!((gt.speed_per_point[i] - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rotating_box_flow_matches_rotation_oracle() {
        // quarter turn in place about the box center: the point at offset
        // (1, 0, 0) lands at offset (0, 1, 0), so flow is (-1, 1, 0)
        let b0 = car_box(Vec3::ZERO, 0.0, 2);
        let b1 = car_box(Vec3::ZERO, PI / 2.0, 2);
        let p = Vec3::new(1.0, 0.0, 0.0);
        let f0 = frame(vec![p], vec![b0], 0, 0.1);
        let f1 = frame(vec![p], vec![b1], 1, 0.1);
        let gt = generate_gt_flow(&f0, &f1, &class_map(), &GtFlowParams::default()).unwrap();
        assert!((gt.flow.vectors[0] - Vec3::new(-1.0, 1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn terminated_track_marks_points_invalid() {
        let p = Vec3::new(0.2, 0.0, 0.0);
        let f0 = frame(vec![p], vec![car_box(Vec3::ZERO, 0.0, 9)], 0, 0.1);
        let f1 = frame(vec![p], vec![], 1, 0.1);
        let gt = generate_gt_flow(&f0, &f1, &class_map(), &GtFlowParams::default()).unwrap();
        assert!(!gt.flow.valid[0]);
    }

    #[test]
    fn overlap_resolved_to_smallest_volume() {
        let big = car_box(Vec3::ZERO, 0.0, 1);
        let small =
            Box3D::new(Vec3::ZERO, (0.8, 0.8, 1.8), 0.0, "PEDESTRIAN", 1.0, Some(2)).unwrap();
        let small_next =
            Box3D::new(Vec3::new(0.1, 0.0, 0.0), (0.8, 0.8, 1.8), 0.0, "PEDESTRIAN", 1.0, Some(2))
                .unwrap();
        let p = Vec3::new(0.1, 0.1, 0.0);
        let f0 = frame(vec![p], vec![big.clone(), small], 0, 0.1);
        let f1 = frame(vec![p], vec![big, small_next], 1, 0.1);
        let map = class_map();
        let gt = generate_gt_flow(&f0, &f1, &map, &GtFlowParams::default()).unwrap();
        assert_eq!(map.taxonomy().name(gt.class_per_point[0]), "PEDESTRIAN");
        assert!((gt.flow.vectors[0] - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn duplicate_track_id_rejected() {
        let f0 = frame(
            vec![],
            vec![car_box(Vec3::ZERO, 0.0, 1), car_box(Vec3::new(10.0, 0.0, 0.0), 0.0, 1)],
            0,
            0.1,
        );
        let f1 = frame(vec![], vec![], 1, 0.1);
        let err = generate_gt_flow(&f0, &f1, &class_map(), &GtFlowParams::default()).unwrap_err();
        assert!(matches!(err, GtFlowError::DuplicateTrackId(1)));
    }

    #[test]
    fn ego_compensation_zeroes_static_points() {
        // one static world point seen from two different ego poses
        let world_point = Vec3::new(12.0, -3.0, 0.5);
        let ego_t = SE3Pose::from_yaw(0.3, Vec3::new(1.0, 2.0, 0.0));
        let ego_t1 = SE3Pose::from_yaw(0.35, Vec3::new(2.0, 2.1, 0.0));
        let sensor_t = ego_t.inverse().apply(world_point);
        let sensor_t1 = ego_t1.inverse().apply(world_point);
        let cloud_t = PointCloud { points: vec![sensor_t], frame_id: 0, timestamp: 0.0 };
        let cloud_t1 = PointCloud { points: vec![sensor_t1], frame_id: 1, timestamp: 0.1 };
        let g_t = transform_cloud_to_global(&cloud_t, &ego_t);
        let g_t1 = transform_cloud_to_global(&cloud_t1, &ego_t1);
        assert!((g_t.points[0] - g_t1.points[0]).norm() < 1e-9);
    }

    #[test]
    fn radius_mask_uses_planar_distance() {
        let cloud = PointCloud {
            points: vec![
                Vec3::ZERO,
                Vec3::new(34.999, 0.0, 0.0),
                Vec3::new(35.001, 0.0, 0.0),
                Vec3::new(0.0, 0.0, 100.0),
            ],
            frame_id: 0,
            timestamp: 0.0,
        };
        let mask = radius_mask(&cloud, Vec3::ZERO, 35.0);
        assert_eq!(mask, vec![true, true, false, true]);
    }

    #[test]
    fn histogram_counts_valid_points_per_class() {
        let map = class_map();
        let taxonomy = map.taxonomy();
        let car = taxonomy.id_of("CAR").unwrap();
        let ped = taxonomy.id_of("PEDESTRIAN").unwrap();
        let bg = taxonomy.background();
        let gt = GroundTruthFlow {
            flow: FlowField::new(vec![Vec3::ZERO; 5], vec![true, true, false, true, true]),
            class_per_point: vec![car, car, car, ped, bg],
            speed_per_point: vec![0.0; 5],
            eval_mask: vec![true; 5],
        };
        let counts = class_point_histogram([&gt, &gt], taxonomy);
        assert_eq!(counts[car.0 as usize], 4);
        assert_eq!(counts[ped.0 as usize], 2);
        assert_eq!(counts[bg.0 as usize], 2);
        assert_eq!(counts.iter().sum::<u64>(), 8);
    }

    #[test]
    fn histogram_reproduces_class_imbalance() {
        // background-dominated scene: vehicles ~15% of points, pedestrians <1%
        let map = class_map();
        let taxonomy = map.taxonomy();
        let bg = taxonomy.background();
        let car = taxonomy.id_of("CAR").unwrap();
        let other = taxonomy.id_of("OTHER_VEHICLES").unwrap();
        let ped = taxonomy.id_of("PEDESTRIAN").unwrap();
        let mut classes = vec![bg; 8450];
        classes.extend(vec![car; 1200]);
        classes.extend(vec![other; 300]);
        classes.extend(vec![ped; 50]);
        let n = classes.len();
        let gt = GroundTruthFlow {
            flow: FlowField::zeros(n),
            class_per_point: classes,
            speed_per_point: vec![0.0; n],
            eval_mask: vec![true; n],
        };
        let counts = class_point_histogram([&gt], taxonomy);
        let total: u64 = counts.iter().sum();
        let ped_frac = counts[ped.0 as usize] as f64 / total as f64;
        let vehicle_frac =
            (counts[car.0 as usize] + counts[other.0 as usize]) as f64 / total as f64;
        assert!(ped_frac < 0.01, "pedestrian fraction {ped_frac}");
        assert!((0.10..=0.20).contains(&vehicle_frac), "vehicle fraction {vehicle_frac}");
    }

    proptest! {
        // rigid motion preserves pairwise distances among one box's points
        #[test]
        fn box_flow_is_rigid(
            yaw0 in -PI..PI,
            dyaw in -1.0..1.0f64,
            shift in (-3.0..3.0f64, -3.0..3.0f64),
            offsets in proptest::collection::vec((-1.9..1.9f64, -0.9..0.9f64, -0.7..0.7f64), 2..12),
        ) {
            let b0 = car_box(Vec3::new(5.0, 1.0, 0.0), yaw0, 3);
            let b1 = car_box(
                Vec3::new(5.0 + shift.0, 1.0 + shift.1, 0.0),
                wrap_angle(yaw0 + dyaw),
                3,
            );
            let points: Vec<Vec3> = offsets
                .iter()
                .map(|&(x, y, z)| b0.pose().apply(Vec3::new(x, y, z)))
                .collect();
            let f0 = frame(points.clone(), vec![b0], 0, 0.1);
            let f1 = frame(points.clone(), vec![b1], 1, 0.1);
            let gt = generate_gt_flow(&f0, &f1, &class_map(), &GtFlowParams::default()).unwrap();
            for i in 0..points.len() {
                for j in (i + 1)..points.len() {
                    let before = points[i].distance(&points[j]);
                    let after = (points[i] + gt.flow.vectors[i])
                        .distance(&(points[j] + gt.flow.vectors[j]));
                    prop_assert!((before - after).abs() < 1e-9);
                }
            }
        }

        // speeds are invariant to one global rigid transform of the whole scene
        #[test]
        fn speed_invariant_under_global_transform(
            g_yaw in -PI..PI,
            g_shift in (-50.0..50.0f64, -50.0..50.0f64),
            motion in (-2.0..2.0f64, -2.0..2.0f64),
        ) {
            let g = SE3Pose::from_yaw(g_yaw, Vec3::new(g_shift.0, g_shift.1, 0.0));
            let b0 = car_box(Vec3::ZERO, 0.2, 1);
            let b1 = car_box(Vec3::new(motion.0, motion.1, 0.0), 0.2, 1);
            let points = vec![Vec3::new(0.5, 0.3, 0.1), Vec3::new(-1.0, -0.5, 0.0)];
            let f0 = frame(points.clone(), vec![b0.clone()], 0, 0.1);
            let f1 = frame(points.clone(), vec![b1.clone()], 1, 0.1);
            let gt = generate_gt_flow(&f0, &f1, &class_map(), &GtFlowParams::default()).unwrap();

            let move_box = |b: &Box3D| {
                let pose = g.compose(&b.pose());
                let yaw = wrap_angle(pose.rotation[1][0].atan2(pose.rotation[0][0]));
                Box3D::new(pose.translation, b.dims, yaw, b.class.clone(), b.confidence, b.track_id)
                    .unwrap()
            };
            let moved_points: Vec<Vec3> = points.iter().map(|&p| g.apply(p)).collect();
            let mf0 = frame(moved_points.clone(), vec![move_box(&b0)], 0, 0.1);
            let mf1 = frame(moved_points, vec![move_box(&b1)], 1, 0.1);
            let mgt = generate_gt_flow(&mf0, &mf1, &class_map(), &GtFlowParams::default()).unwrap();

            for i in 0..points.len() {
                prop_assert!((gt.speed_per_point[i] - mgt.speed_per_point[i]).abs() < 1e-9);
            }
        }

        // shrinking the radius never adds points to the mask
        #[test]
        fn radius_mask_is_monotone(
            pts in proptest::collection::vec((-60.0..60.0f64, -60.0..60.0f64, -2.0..2.0f64), 1..50),
            r1 in 1.0..50.0f64,
            shrink in 0.0..1.0f64,
        ) {
            let cloud = PointCloud {
                points: pts.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect(),
                frame_id: 0,
                timestamp: 0.0,
            };
            let r2 = r1 * shrink;
            let m1 = radius_mask(&cloud, Vec3::ZERO, r1);
            let m2 = radius_mask(&cloud, Vec3::ZERO, r2);
            for (a, b) in m1.iter().zip(&m2) {
                prop_assert!(*a || !*b);
            }
        }
    }
}

//! Oriented 3D bounding boxes.
//!
//! Boxes are yaw-only: the rotation about z plus the center define the box
//! pose. Length runs along the box x axis, width along y, height along z.

use crate::geometry::{wrap_angle, SE3Pose, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Oriented box with class label, detector confidence and optional track id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Vec3,
    /// (length, width, height) in meters, each strictly positive.
    pub dims: (f64, f64, f64),
    /// Heading in radians, normalized to `[-pi, pi)` at construction.
    pub yaw: f64,
    /// Fine class name; taxonomy mapping to meta-classes happens downstream.
    pub class: String,
    pub confidence: f64,
    pub track_id: Option<u64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum BoxError {
    #[error("box dims must be strictly positive, got ({0}, {1}, {2})")]
    NonPositiveDims(f64, f64, f64),
    #[error("track id mismatch: {0:?} vs {1:?}")]
    TrackIdMismatch(Option<u64>, Option<u64>),
}

impl Box3D {
    pub fn new(
        center: Vec3,
        dims: (f64, f64, f64),
        yaw: f64,
        class: impl Into<String>,
        confidence: f64,
        track_id: Option<u64>,
    ) -> Result<Self, BoxError> {
        if dims.0 <= 0.0 || dims.1 <= 0.0 || dims.2 <= 0.0 {
            return Err(BoxError::NonPositiveDims(dims.0, dims.1, dims.2));
        }
        Ok(Box3D { center, dims, yaw: wrap_angle(yaw), class: class.into(), confidence, track_id })
    }

    /// Box pose as an SE(3) element: box frame -> global frame.
    pub fn pose(&self) -> SE3Pose {
        SE3Pose::from_yaw(self.yaw, self.center)
    }

    pub fn volume(&self) -> f64 {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    /// True iff `p`, expressed in the box frame, lies within the half extents
    /// expanded by `margin` on every axis.
    pub fn contains(&self, p: Vec3, margin: f64) -> bool {
        let local = self.pose().inverse().apply(p);
        local.x.abs() <= self.dims.0 / 2.0 + margin
            && local.y.abs() <= self.dims.1 / 2.0 + margin
            && local.z.abs() <= self.dims.2 / 2.0 + margin
    }

    /// Rigid motion carrying a point attached to this box at `t` to its
    /// location under `next` at `t+1`: `pose(next) ∘ pose(self)⁻¹`.
    ///
    /// Errors if the two boxes do not share a track id; that is a caller bug.
    pub fn relative_transform(&self, next: &Box3D) -> Result<SE3Pose, BoxError> {
        if self.track_id != next.track_id {
            return Err(BoxError::TrackIdMismatch(self.track_id, next.track_id));
        }
        Ok(next.pose().compose(&self.pose().inverse()))
    }
}

/// Picks the box that owns point `p` when several contain it.
///
/// Preference order: smallest volume, then higher confidence, then lower
/// track id (boxes without one sort last), then lower index. Returns the
/// index into `boxes`, or `None` when no box contains the point.
pub fn select_containing_box(boxes: &[Box3D], p: Vec3, margin: f64) -> Option<usize> {
    boxes
        .iter()
        .enumerate()
        .filter(|(_, b)| b.contains(p, margin))
        .min_by(|(i, a), (j, b)| {
            a.volume()
                .total_cmp(&b.volume())
                .then(b.confidence.total_cmp(&a.confidence))
                .then(a.track_id.unwrap_or(u64::MAX).cmp(&b.track_id.unwrap_or(u64::MAX)))
                .then(i.cmp(j))
        })
        .map(|(i, _)| i)
}

/// Bird's-eye-view footprint corners in counterclockwise order.
fn bev_corners(b: &Box3D) -> [(f64, f64); 4] {
    let (c, s) = (b.yaw.cos(), b.yaw.sin());
    let (hl, hw) = (b.dims.0 / 2.0, b.dims.1 / 2.0);
    [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)]
        .map(|(x, y)| (b.center.x + c * x - s * y, b.center.y + s * x + c * y))
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc.abs() / 2.0
}

/// Clips convex `subject` by the half-plane left of edge `a -> b`
/// (Sutherland-Hodgman step; both polygons counterclockwise).
fn clip_by_edge(subject: &[(f64, f64)], a: (f64, f64), b: (f64, f64)) -> Vec<(f64, f64)> {
    let inside = |p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0;
    let mut out = Vec::with_capacity(subject.len() + 1);
    for i in 0..subject.len() {
        let cur = subject[i];
        let prev = subject[(i + subject.len() - 1) % subject.len()];
        let (ci, pi) = (inside(cur), inside(prev));
        if ci != pi {
            // edge crosses the clip line; add the intersection point
            let dx = cur.0 - prev.0;
            let dy = cur.1 - prev.1;
            let denom = (b.0 - a.0) * dy - (b.1 - a.1) * dx;
            let t = ((b.1 - a.1) * (prev.0 - a.0) - (b.0 - a.0) * (prev.1 - a.1)) / denom;
            out.push((prev.0 + t * dx, prev.1 + t * dy));
        }
        if ci {
            out.push(cur);
        }
    }
    out
}

/// Oriented 3D intersection-over-union for yaw-only boxes: convex polygon
/// intersection of the two footprints times the z-extent overlap.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let z_lo = (a.center.z - a.dims.2 / 2.0).max(b.center.z - b.dims.2 / 2.0);
    let z_hi = (a.center.z + a.dims.2 / 2.0).min(b.center.z + b.dims.2 / 2.0);
    let dz = z_hi - z_lo;
    if dz <= 0.0 {
        return 0.0;
    }
    let clip = bev_corners(b);
    let mut poly: Vec<(f64, f64)> = bev_corners(a).to_vec();
    for i in 0..4 {
        if poly.is_empty() {
            return 0.0;
        }
        poly = clip_by_edge(&poly, clip[i], clip[(i + 1) % 4]);
    }
    if poly.len() < 3 {
        return 0.0;
    }
    let inter = polygon_area(&poly) * dz;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit_cube() -> Box3D {
        Box3D::new(Vec3::ZERO, (1.0, 1.0, 1.0), 0.0, "CAR", 1.0, Some(0)).unwrap()
    }

    #[test]
    fn rejects_non_positive_dims() {
        let err = Box3D::new(Vec3::ZERO, (0.0, 1.0, 1.0), 0.0, "CAR", 1.0, None).unwrap_err();
        assert!(matches!(err, BoxError::NonPositiveDims(..)));
    }

    #[test]
    fn yaw_normalized_at_construction() {
        let b = Box3D::new(Vec3::ZERO, (1.0, 1.0, 1.0), 3.0 * PI / 2.0, "CAR", 1.0, None).unwrap();
        assert!((b.yaw - (-PI / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn contains_center_and_margin() {
        let b = unit_cube();
        assert!(b.contains(Vec3::ZERO, 0.0));
        // 0.6 is past the 0.5 half extent without margin, inside with 0.2
        assert!(!b.contains(Vec3::new(0.6, 0.0, 0.0), 0.0));
        assert!(b.contains(Vec3::new(0.6, 0.0, 0.0), 0.2));
    }

    #[test]
    fn contains_respects_yaw() {
        // box frame coordinates of (0.9, 1.9, 0) under yaw pi/2 are (1.9, -0.9, 0):
        // inside a (4, 2, 2) box (|1.9| <= 2, |-0.9| <= 1)
        let b = Box3D::new(Vec3::ZERO, (4.0, 2.0, 2.0), PI / 2.0, "CAR", 1.0, None).unwrap();
        assert!(b.contains(Vec3::new(0.9, 1.9, 0.0), 0.0));
        assert!(!b.contains(Vec3::new(1.9, 0.9, 0.0), 0.0));
    }

    #[test]
    fn volume_is_product_of_dims() {
        assert_eq!(unit_cube().volume(), 1.0);
        let b = Box3D::new(Vec3::ZERO, (4.5, 2.0, 1.5), 0.0, "CAR", 1.0, None).unwrap();
        assert!((b.volume() - 13.5).abs() < 1e-12);
        let b = Box3D::new(Vec3::ZERO, (10.0, 2.6, 4.0), 0.0, "BUS", 1.0, None).unwrap();
        assert!((b.volume() - 104.0).abs() < 1e-12);
    }

    #[test]
    fn relative_transform_identity_for_same_box() {
        let b = unit_cube();
        let t = b.relative_transform(&b).unwrap();
        let p = Vec3::new(0.3, -0.2, 0.1);
        assert!((t.apply(p) - p).norm() < 1e-12);
    }

    #[test]
    fn relative_transform_pure_translation() {
        let a = unit_cube();
        let mut b = a.clone();
        b.center = Vec3::new(1.0, 0.0, 0.0);
        let t = a.relative_transform(&b).unwrap();
        let moved = t.apply(Vec3::new(0.2, 0.2, 0.0));
        assert!((moved - Vec3::new(1.2, 0.2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn relative_transform_rotation_and_translation() {
        // box at origin yaw 0 -> center (2,0,0) yaw pi/2; the corner point
        // (1, 0.5, 0) rotates to (-0.5, 1, 0) about the new center: (1.5, 1, 0)
        let a = Box3D::new(Vec3::ZERO, (2.0, 1.0, 1.0), 0.0, "CAR", 1.0, Some(7)).unwrap();
        let b =
            Box3D::new(Vec3::new(2.0, 0.0, 0.0), (2.0, 1.0, 1.0), PI / 2.0, "CAR", 1.0, Some(7))
                .unwrap();
        let t = a.relative_transform(&b).unwrap();
        let moved = t.apply(Vec3::new(1.0, 0.5, 0.0));
        assert!((moved - Vec3::new(1.5, 1.0, 0.0)).norm() < 1e-9, "got {:?}", moved);
    }

    #[test]
    fn relative_transform_rejects_mismatched_tracks() {
        let a = unit_cube();
        let mut b = a.clone();
        b.track_id = Some(1);
        assert_eq!(
            a.relative_transform(&b).unwrap_err(),
            BoxError::TrackIdMismatch(Some(0), Some(1))
        );
    }

    #[test]
    fn select_prefers_smallest_then_confidence_then_track_id() {
        let big = Box3D::new(Vec3::ZERO, (4.0, 2.0, 2.0), 0.0, "CAR", 0.9, Some(0)).unwrap();
        let small =
            Box3D::new(Vec3::ZERO, (1.0, 1.0, 1.0), 0.0, "PEDESTRIAN", 0.3, Some(1)).unwrap();
        let p = Vec3::new(0.1, 0.1, 0.0);
        assert_eq!(select_containing_box(&[big.clone(), small.clone()], p, 0.0), Some(1));
        assert_eq!(select_containing_box(&[small.clone(), big.clone()], p, 0.0), Some(0));

        // equal volume: higher confidence wins
        let twin_lo = Box3D::new(Vec3::ZERO, (1.0, 1.0, 1.0), 0.0, "CAR", 0.4, Some(5)).unwrap();
        let twin_hi = Box3D::new(Vec3::ZERO, (1.0, 1.0, 1.0), 0.0, "CAR", 0.8, Some(6)).unwrap();
        assert_eq!(select_containing_box(&[twin_lo.clone(), twin_hi.clone()], p, 0.0), Some(1));

        // equal volume and confidence: lower track id wins
        let id9 = Box3D::new(Vec3::ZERO, (1.0, 1.0, 1.0), 0.0, "CAR", 0.5, Some(9)).unwrap();
        let id2 = Box3D::new(Vec3::ZERO, (1.0, 1.0, 1.0), 0.0, "CAR", 0.5, Some(2)).unwrap();
        assert_eq!(select_containing_box(&[id9, id2], p, 0.0), Some(1));

        assert_eq!(select_containing_box(&[big, small], Vec3::new(50.0, 0.0, 0.0), 0.0), None);
    }

    #[test]
    fn iou_identical_boxes_is_one() {
        let b =
            Box3D::new(Vec3::new(3.0, -1.0, 0.5), (4.2, 1.9, 1.6), 0.7, "CAR", 1.0, None).unwrap();
        assert!((iou_3d(&b, &b) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iou_disjoint_boxes_is_zero() {
        let a = unit_cube();
        let mut b = unit_cube();
        b.center = Vec3::new(5.0, 0.0, 0.0);
        assert_eq!(iou_3d(&a, &b), 0.0);
        // overlapping footprints but separated in z
        let mut c = unit_cube();
        c.center = Vec3::new(0.0, 0.0, 3.0);
        assert_eq!(iou_3d(&a, &c), 0.0);
    }

    #[test]
    fn iou_half_shifted_cubes() {
        // unit cubes offset 0.5 in x: intersection 0.5, union 1.5
        let a = unit_cube();
        let mut b = unit_cube();
        b.center = Vec3::new(0.5, 0.0, 0.0);
        assert!((iou_3d(&a, &b) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn iou_rotated_square_octagon() {
        // unit square vs itself rotated 45 degrees intersect in a regular
        // octagon of area 2(sqrt(2) - 1)
        let a = unit_cube();
        let mut b = unit_cube();
        b.yaw = PI / 4.0;
        let inter = 2.0 * (2.0f64.sqrt() - 1.0);
        let expect = inter / (2.0 - inter);
        assert!((iou_3d(&a, &b) - expect).abs() < 1e-9, "got {}", iou_3d(&a, &b));
    }

    fn arb_box() -> impl Strategy<Value = Box3D> {
        (
            (-20.0..20.0f64, -20.0..20.0f64, -2.0..2.0f64),
            (0.5..8.0f64, 0.5..4.0f64, 0.5..3.0f64),
            -PI..PI,
        )
            .prop_map(|((x, y, z), (l, w, h), yaw)| {
                Box3D::new(Vec3::new(x, y, z), (l, w, h), yaw, "CAR", 1.0, Some(1)).unwrap()
            })
    }

    fn arb_pose() -> impl Strategy<Value = SE3Pose> {
        ((-PI..PI), (-30.0..30.0f64, -30.0..30.0f64, -3.0..3.0f64))
            .prop_map(|(yaw, (x, y, z))| SE3Pose::from_yaw(yaw, Vec3::new(x, y, z)))
    }

    proptest! {
        // containment is invariant when box and point move rigidly together,
        // away from the boundary
        #[test]
        fn containment_rigid_invariance(
            b in arb_box(),
            t in arb_pose(),
            dx in -1.2..1.2f64,
            dy in -1.2..1.2f64,
            dz in -1.2..1.2f64,
        ) {
            let p = b.pose().apply(Vec3::new(
                dx * b.dims.0 / 2.0,
                dy * b.dims.1 / 2.0,
                dz * b.dims.2 / 2.0,
            ));
            // skip points within 1e-6 of the boundary on any axis
            let near_edge = [dx, dy, dz].iter().any(|&f| (f.abs() - 1.0).abs() < 1e-6);
            prop_assume!(!near_edge);

            let inside = b.contains(p, 0.0);
            let mut moved = b.clone();
            let pose = t.compose(&b.pose());
            moved.center = pose.translation;
            // extract yaw from the rotation's first column
            moved.yaw = wrap_angle(pose.rotation[1][0].atan2(pose.rotation[0][0]));
            prop_assert_eq!(moved.contains(t.apply(p), 0.0), inside);
        }

        // IoU is symmetric and within [0, 1]
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou_3d(&a, &b);
            let ba = iou_3d(&b, &a);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
            prop_assert!((ab - ba).abs() < 1e-9);
        }

        // composing t->t+1 with t+1->t+2 equals t->t+2
        #[test]
        fn relative_transform_chains(a in arb_box(), b in arb_box(), c in arb_box(), p_off in (-0.5..0.5f64, -0.5..0.5f64, -0.5..0.5f64)) {
            let t01 = a.relative_transform(&b).unwrap();
            let t12 = b.relative_transform(&c).unwrap();
            let t02 = a.relative_transform(&c).unwrap();
            let p = a.pose().apply(Vec3::new(p_off.0, p_off.1, p_off.2));
            let chained = t12.apply(t01.apply(p));
            let direct = t02.apply(p);
            prop_assert!((chained - direct).norm() < 1e-9);
        }
    }
}

//! Point cloud and flow field containers.

use crate::geometry::{SE3Pose, Vec3};
use serde::{Deserialize, Serialize};

/// Per-frame set of 3D points, all expressed in one coordinate frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub frame_id: u64,
    /// Seconds; strictly increasing with `frame_id` within a sequence.
    pub timestamp: f64,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Every point transformed by `pose`; frame id and timestamp carry over.
    pub fn transformed(&self, pose: &SE3Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| pose.apply(p)).collect(),
            frame_id: self.frame_id,
            timestamp: self.timestamp,
        }
    }
}

/// One displacement vector per point of a source cloud, with a validity mask.
/// Invalid entries are excluded from every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub vectors: Vec<Vec3>,
    pub valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(n: usize) -> FlowField {
        FlowField { vectors: vec![Vec3::ZERO; n], valid: vec![true; n] }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Panics if the mask length disagrees with the vector count; the two are
    /// one structure and must be built together.
    pub fn new(vectors: Vec<Vec3>, valid: Vec<bool>) -> FlowField {
        assert_eq!(vectors.len(), valid.len(), "flow mask length mismatch");
        FlowField { vectors, valid }
    }
}

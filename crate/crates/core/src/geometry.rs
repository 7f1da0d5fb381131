//! Rigid-body geometry: 3D vectors and SE(3) poses.
//!
//! Poses are stored as an explicit 3x3 rotation matrix plus a translation so
//! that composition and inversion stay cheap and allocation-free. Rotations in
//! this toolkit are almost always pure yaw (see [`SE3Pose::from_yaw`]), but the
//! pose type itself is a full SE(3) element.

use serde::{Deserialize, Serialize};

/// A point or displacement in meters (or meters per frame interval for flow).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Distance in the xy plane, ignoring z.
    pub fn planar_distance(&self, other: &Vec3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        (*self - *other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Row-major 3x3 matrix, used only as the rotation part of [`SE3Pose`].
pub type Mat3 = [[f64; 3]; 3];

pub const MAT3_IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

fn mat3_transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

fn mat3_apply(a: &Mat3, v: Vec3) -> Vec3 {
    Vec3::new(
        a[0][0] * v.x + a[0][1] * v.y + a[0][2] * v.z,
        a[1][0] * v.x + a[1][1] * v.y + a[1][2] * v.z,
        a[2][0] * v.x + a[2][1] * v.y + a[2][2] * v.z,
    )
}

fn mat3_det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Rigid transform: `p_out = rotation * p_in + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SE3Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl SE3Pose {
    pub fn identity() -> Self {
        SE3Pose { rotation: MAT3_IDENTITY, translation: Vec3::ZERO }
    }

    pub fn from_translation(t: Vec3) -> Self {
        SE3Pose { rotation: MAT3_IDENTITY, translation: t }
    }

    /// Rotation about the z axis by `yaw` radians, then translation.
    pub fn from_yaw(yaw: f64, translation: Vec3) -> Self {
        let (s, c) = yaw.sin_cos();
        SE3Pose { rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]], translation }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        mat3_apply(&self.rotation, p) + self.translation
    }

    /// `self` after `other`: applying the result equals applying `other`
    /// first and `self` second.
    pub fn compose(&self, other: &SE3Pose) -> SE3Pose {
        SE3Pose {
            rotation: mat3_mul(&self.rotation, &other.rotation),
            translation: mat3_apply(&self.rotation, other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> SE3Pose {
        let rt = mat3_transpose(&self.rotation);
        SE3Pose { rotation: rt, translation: -mat3_apply(&rt, self.translation) }
    }

    /// Checks orthonormality (`R Rᵀ = I` and `det R = +1`) within `tol`.
    pub fn rotation_is_orthonormal(&self, tol: f64) -> bool {
        let rrt = mat3_mul(&self.rotation, &mat3_transpose(&self.rotation));
        #[allow(clippy::needless_range_loop)] // (i, j) mirror the matrix entry names
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (rrt[i][j] - expect).abs() > tol {
                    return false;
                }
            }
        }
        (mat3_det(&self.rotation) - 1.0).abs() <= tol
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can land exactly on +pi for inputs like -pi - eps
    if w >= PI {
        w -= 2.0 * PI;
    }
    w
}

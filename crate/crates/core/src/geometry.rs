//! Camera model, rotation-vector parameterization and pose-error metrics.
//!
//! Conventions used throughout the crate:
//!
//! - right-handed camera frame, optical axis along `+z`, image `x` to the
//!   right and `y` down;
//! - the image origin is the top-left corner of the top-left pixel, so the
//!   center of pixel `(i, j)` sits at `(i + 0.5, j + 0.5)`;
//! - a [`Pose`] maps world (mesh) coordinates into the camera frame,
//!   `x_cam = R * x_world + t`;
//! - lengths are millimetres, angles radians unless a name says `deg`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
pub type Mat3 = Matrix3<f64>;

/// Depth below which a point counts as at or behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

/// Tolerance used when validating that a matrix is a rotation.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix of an axis-angle (Euler-Rodrigues) vector.
pub fn rodrigues_to_matrix(r_vec: &Vec3) -> Mat3 {
    let theta2 = r_vec.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(r_vec);
    // R = I + a K + b K^2 with a = sin(t)/t, b = (1 - cos t)/t^2
    let (a, b) = if theta < 1e-4 {
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Mat3::identity() + k * a + k * k * b
}

/// Checks `R^T R = I` within `tol` and `det R > 0`.
pub fn check_rotation(rot: &Mat3, tol: f64) -> Result<()> {
    if rot.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rotation matrix".into()));
    }
    let err = (rot.transpose() * rot - Mat3::identity()).amax();
    if err > tol {
        return Err(invalid(format!(
            "matrix is not orthonormal (max |R^T R - I| = {err:.3e})"
        )));
    }
    if rot.determinant() <= 0.0 {
        return Err(invalid("matrix has non-positive determinant"));
    }
    Ok(())
}

/// Rotation vector of a rotation matrix, with norm in `[0, pi]`.
pub fn matrix_to_rodrigues(rot: &Mat3) -> Result<Vec3> {
    check_rotation(rot, ORTHONORMAL_TOL)?;
    let v = Vec3::new(
        rot[(2, 1)] - rot[(1, 2)],
        rot[(0, 2)] - rot[(2, 0)],
        rot[(1, 0)] - rot[(0, 1)],
    );
    let sin_t = 0.5 * v.norm();
    let cos_t = 0.5 * (rot.trace() - 1.0);
    let theta = sin_t.atan2(cos_t);

    if theta < 1e-4 {
        return Ok(v * (0.5 * (1.0 + theta * theta / 6.0)));
    }
    if sin_t > 1e-3 || cos_t > 0.0 {
        return Ok(v * (theta / (2.0 * sin_t)));
    }
    // Near pi: R + R^T = 2 cos(t) I + 2 (1 - cos t) k k^T.
    let kk = (rot + rot.transpose() - Mat3::identity() * (2.0 * cos_t)) / (2.0 * (1.0 - cos_t));
    let col = (0..3)
        .max_by(|&a, &b| kk[(a, a)].total_cmp(&kk[(b, b)]))
        .unwrap_or(0);
    let mut axis = kk.column(col).into_owned();
    axis /= axis.norm();
    if axis.dot(&v) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta.min(PI))
}

/// Geodesic angle (radians) between two rotations.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let m = a.transpose() * b;
    let v = Vec3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    );
    (0.5 * v.norm()).atan2(0.5 * (m.trace() - 1.0))
}

/// A 6-DoF camera pose: rotation vector (radians) and translation (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    r_vec: Vec3,
    t: Vec3,
}

impl Pose {
    /// Builds a pose; the rotation vector must have norm strictly below pi.
    pub fn new(r_vec: Vec3, t: Vec3) -> Result<Self> {
        if r_vec.iter().chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pose component".into()));
        }
        if r_vec.norm() >= PI {
            return Err(invalid(format!(
                "rotation vector norm {} must be < pi",
                r_vec.norm()
            )));
        }
        Ok(Self { r_vec, t })
    }

    pub fn identity() -> Self {
        Self {
            r_vec: Vec3::zeros(),
            t: Vec3::zeros(),
        }
    }

    pub fn from_matrix(rot: &Mat3, t: Vec3) -> Result<Self> {
        Self::canonical(matrix_to_rodrigues(rot)?, t)
    }

    /// Like [`Pose::new`] but maps any finite rotation vector onto the
    /// equivalent one with norm below pi.
    pub fn canonical(r_vec: Vec3, t: Vec3) -> Result<Self> {
        if r_vec.iter().chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pose component".into()));
        }
        let mut r = r_vec;
        if r.norm() >= PI {
            r = matrix_to_rodrigues(&rodrigues_to_matrix(&r))?;
            let n = r.norm();
            if n >= PI {
                // exactly a half turn; either sign is the same rotation
                r *= (PI * (1.0 - 1e-12)) / n;
            }
        }
        Self::new(r, t)
    }

    /// Parses `[r_x, r_y, r_z, t_x, t_y, t_z]`.
    pub fn from_array(p: [f64; 6]) -> Result<Self> {
        Self::new(Vec3::new(p[0], p[1], p[2]), Vec3::new(p[3], p[4], p[5]))
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.r_vec.x,
            self.r_vec.y,
            self.r_vec.z,
            self.t.x,
            self.t.y,
            self.t.z,
        ]
    }

    pub fn r_vec(&self) -> &Vec3 {
        &self.r_vec
    }

    pub fn translation(&self) -> &Vec3 {
        &self.t
    }

    pub fn rotation(&self) -> Mat3 {
        rodrigues_to_matrix(&self.r_vec)
    }

    /// World point to camera frame.
    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p + self.t
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn camera_center(&self) -> Vec3 {
        -(self.rotation().transpose() * self.t)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Result<Pose> {
        let r = self.rotation();
        Pose::from_matrix(&(r * other.rotation()), r * other.t + self.t)
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let arr = <[f64; 6]>::deserialize(d)?;
        Pose::from_array(arr).map_err(serde::de::Error::custom)
    }
}

/// Pinhole intrinsics (matrix `A`) plus image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Narrow field of view: `f = 1.2 * max(width, height)`, principal
    /// point at the image center.
    pub fn with_default_focal(width: u32, height: u32) -> Result<Self> {
        let f = 1.2 * f64::from(width.max(height));
        Self::new(
            f,
            f,
            f64::from(width) / 2.0,
            f64::from(height) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("intrinsics".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(invalid("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("image size must be non-zero"));
        }
        if !(0.0..f64::from(self.width)).contains(&self.cx)
            || !(0.0..f64::from(self.height)).contains(&self.cy)
        {
            return Err(invalid("principal point must lie inside the image"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a camera-frame point that is known to be in front.
    #[inline]
    pub fn project_camera_point(&self, p: &Vec3) -> Vec2 {
        Vec2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    pub fn contains(&self, px: &Vec2) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x <= f64::from(self.width) && px.y <= f64::from(self.height)
    }
}

/// Pixel coordinates and camera-frame depths of projected points.
#[derive(Debug, Clone)]
pub struct Projection {
    pub pixels: Vec<Vec2>,
    pub depths: Vec<f64>,
}

/// Projects world points through `A [R | t]`.
///
/// Fails with [`Error::BehindCamera`] listing every point whose depth is
/// at most [`MIN_DEPTH`].
pub fn project_points(intr: &CameraIntrinsics, pose: &Pose, pts: &[Vec3]) -> Result<Projection> {
    let rot = pose.rotation();
    let t = pose.translation();
    let mut pixels = Vec::with_capacity(pts.len());
    let mut depths = Vec::with_capacity(pts.len());
    let mut behind = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let c = rot * p + t;
        if !(c.z > MIN_DEPTH) {
            behind.push(i);
            continue;
        }
        pixels.push(intr.project_camera_point(&c));
        depths.push(c.z);
    }
    if !behind.is_empty() {
        let count = behind.len();
        behind.truncate(16);
        return Err(Error::BehindCamera {
            count,
            indices: behind,
        });
    }
    Ok(Projection { pixels, depths })
}

/// Mean L2 reprojection error (pixels) over explicit 3D/2D correspondences.
pub fn reprojection_error(
    intr: &CameraIntrinsics,
    pose: &Pose,
    pts3d: &[Vec3],
    pts2d: &[Vec2],
) -> Result<f64> {
    if pts3d.is_empty() {
        return Err(invalid("empty correspondence set"));
    }
    if pts3d.len() != pts2d.len() {
        return Err(invalid(format!(
            "correspondence size mismatch: {} 3D vs {} 2D points",
            pts3d.len(),
            pts2d.len()
        )));
    }
    let proj = project_points(intr, pose, pts3d)?;
    let total: f64 = proj
        .pixels
        .iter()
        .zip(pts2d)
        .map(|(a, b)| (a - b).norm())
        .sum();
    Ok(total / pts3d.len() as f64)
}

/// Average distance (ADD) between vertices transformed by two poses.
pub fn add_metric(vertices: &[Vec3], pose_gt: &Pose, pose_est: &Pose) -> Result<f64> {
    if vertices.is_empty() {
        return Err(invalid("ADD needs at least one vertex"));
    }
    let (tg, te) = (pose_gt.translation(), pose_est.translation());
    if pose_gt.r_vec() == pose_est.r_vec() {
        return Ok((tg - te).norm());
    }
    let (rg, re) = (pose_gt.rotation(), pose_est.rotation());
    let total: f64 = vertices
        .iter()
        .map(|u| ((rg * u + tg) - (re * u + te)).norm())
        .sum();
    Ok(total / vertices.len() as f64)
}

pub fn translation_error(pose_gt: &Pose, pose_est: &Pose) -> f64 {
    (pose_gt.translation() - pose_est.translation()).norm()
}

pub fn rotation_error_deg(pose_gt: &Pose, pose_est: &Pose) -> f64 {
    rotation_angle_between(&pose_gt.rotation(), &pose_est.rotation()).to_degrees()
}

/// Inclusive composite threshold test (`Xmm-Ydeg`).
pub fn within_threshold(pose_gt: &Pose, pose_est: &Pose, t_thresh_mm: f64, r_thresh_deg: f64) -> bool {
    translation_error(pose_gt, pose_est) <= t_thresh_mm
        && rotation_error_deg(pose_gt, pose_est) <= r_thresh_deg
}

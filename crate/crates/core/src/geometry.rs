//! Camera models, rigid poses, projection and unprojection.
//!
//! Conventions used throughout the crate:
//! - camera frame: +x right, +y down, +z forward;
//! - pixel coordinates: origin at the center of the top-left pixel, +u right,
//!   +v down;
//! - poses are camera-to-world: `X_world = R * X_cam + t`;
//! - depth is the z coordinate for perspective cameras and the range along
//!   the ray for fisheye and equirectangular cameras.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Maximum allowed deviation of a stored quaternion from unit norm.
pub const UNIT_QUATERNION_TOL: f64 = 1e-9;

/// Points closer than this to the perspective image plane are rejected.
const MIN_Z: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is outside the projection domain of the {0:?} model")]
    OutOfDomain(CameraModel),
    #[error("depth must be positive and finite, got {0}")]
    InvalidDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraModel {
    Perspective,
    #[serde(rename = "fisheye")]
    FisheyeEquidistant,
    Equirectangular,
}

impl CameraModel {
    pub fn as_str(self) -> &'static str {
        match self {
            CameraModel::Perspective => "perspective",
            CameraModel::FisheyeEquidistant => "fisheye",
            CameraModel::Equirectangular => "equirectangular",
        }
    }
}

impl std::str::FromStr for CameraModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perspective" => Ok(CameraModel::Perspective),
            "fisheye" => Ok(CameraModel::FisheyeEquidistant),
            "equirectangular" => Ok(CameraModel::Equirectangular),
            other => Err(format!(
                "unknown camera model '{other}' (expected perspective, fisheye or equirectangular)"
            )),
        }
    }
}

/// Intrinsic parameters. For equirectangular cameras `fx`, `fy`, `cx` and
/// `cy` are ignored: the image width spans 2π of azimuth and the height π
/// of elevation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub model: CameraModel,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        model: CameraModel,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let cam = CameraIntrinsics {
            model,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size {}x{} must be at least 1x1",
                self.width, self.height
            )));
        }
        if self.model != CameraModel::Equirectangular {
            let ok = |f: f64| f.is_finite() && f > 0.0;
            if !ok(self.fx) || !ok(self.fy) {
                return Err(GeometryError::InvalidIntrinsics(format!(
                    "focal lengths must be positive, got fx={} fy={}",
                    self.fx, self.fy
                )));
            }
            if !self.cx.is_finite() || !self.cy.is_finite() {
                return Err(GeometryError::InvalidIntrinsics(
                    "principal point must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Same parameters under a different projection model.
    pub fn with_model(&self, model: CameraModel) -> Self {
        CameraIntrinsics { model, ..*self }
    }

    /// The 3×3 pinhole calibration matrix.
    pub fn k_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    #[inline]
    pub fn contains(&self, p: Pixel) -> bool {
        p.u >= -0.5
            && p.v >= -0.5
            && p.u < self.width as f64 - 0.5
            && p.v < self.height as f64 - 0.5
    }

    /// Depth of a camera-frame point under this model's depth semantics.
    #[inline]
    pub fn depth_of(&self, point_cam: &Vec3) -> f64 {
        match self.model {
            CameraModel::Perspective => point_cam.z,
            _ => point_cam.norm(),
        }
    }
}

/// Continuous image coordinates; may lie outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Pixel { u, v }
    }

    /// Nearest integer pixel, if it falls inside a `width × height` image.
    #[inline]
    pub fn nearest(self, width: usize, height: usize) -> Option<(usize, usize)> {
        let x = self.u.round();
        let y = self.v.round();
        if x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
            Some((x as usize, y as usize))
        } else {
            None
        }
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    WorldToCam,
    CamToWorld,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    /// Builds a pose from a `[w, x, y, z]` quaternion that must already be
    /// unit length within `tol`. Quaternions off by more than rounding noise
    /// are renormalized; the rest are kept bit-for-bit.
    pub fn from_wxyz(q: [f64; 4], t: [f64; 3], tol: f64) -> Result<Self, GeometryError> {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > tol {
            return Err(GeometryError::NonUnitQuaternion(norm));
        }
        let rotation = if (norm - 1.0).abs() <= 1e-14 {
            UnitQuaternion::new_unchecked(quat)
        } else {
            UnitQuaternion::new_normalize(quat)
        };
        Ok(Pose {
            rotation,
            translation: Vec3::new(t[0], t[1], t[2]),
        })
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn t_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: renormalize(self.rotation * other.rotation),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r_inv = self.rotation.inverse();
        Pose {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
    }
}

#[inline]
fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Projects a camera-frame point to the image.
pub fn project(point_cam: &Vec3, cam: &CameraIntrinsics) -> Result<Pixel, GeometryError> {
    let (x, y, z) = (point_cam.x, point_cam.y, point_cam.z);
    match cam.model {
        CameraModel::Perspective => {
            if !(z > MIN_Z) {
                return Err(GeometryError::OutOfDomain(cam.model));
            }
            Ok(Pixel::new(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy))
        }
        CameraModel::FisheyeEquidistant => {
            let rho = x.hypot(y);
            if rho == 0.0 {
                // On the optical axis: only the forward direction is defined.
                return if z > 0.0 {
                    Ok(Pixel::new(cam.cx, cam.cy))
                } else {
                    Err(GeometryError::OutOfDomain(cam.model))
                };
            }
            let theta = rho.atan2(z);
            Ok(Pixel::new(
                cam.cx + cam.fx * theta * x / rho,
                cam.cy + cam.fy * theta * y / rho,
            ))
        }
        CameraModel::Equirectangular => {
            let norm = point_cam.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(GeometryError::OutOfDomain(cam.model));
            }
            let lon = x.atan2(z);
            let lat = (y / norm).clamp(-1.0, 1.0).asin();
            let w = cam.width as f64;
            // atan2 returns -π as +π; wrap the seam back to column zero.
            let u = (lon / TAU + 0.5) * w;
            Ok(Pixel::new(
                if u >= w { u - w } else { u },
                (0.5 + lat / PI) * cam.height as f64,
            ))
        }
    }
}

/// Unit-free ray direction through pixel `p`, scaled so that
/// `depth_of(ray) == 1`.
pub fn pixel_ray(p: Pixel, cam: &CameraIntrinsics) -> Vec3 {
    match cam.model {
        CameraModel::Perspective => {
            Vec3::new((p.u - cam.cx) / cam.fx, (p.v - cam.cy) / cam.fy, 1.0)
        }
        CameraModel::FisheyeEquidistant => {
            let mx = (p.u - cam.cx) / cam.fx;
            let my = (p.v - cam.cy) / cam.fy;
            let theta = mx.hypot(my);
            if theta == 0.0 {
                return Vec3::new(0.0, 0.0, 1.0);
            }
            let s = theta.sin() / theta;
            Vec3::new(s * mx, s * my, theta.cos())
        }
        CameraModel::Equirectangular => {
            let lon = (p.u / cam.width as f64 - 0.5) * TAU;
            let lat = (p.v / cam.height as f64 - 0.5) * PI;
            Vec3::new(lat.cos() * lon.sin(), lat.sin(), lat.cos() * lon.cos())
        }
    }
}

/// Lifts pixel `p` at `depth` into the camera frame.
pub fn unproject(p: Pixel, depth: f64, cam: &CameraIntrinsics) -> Result<Vec3, GeometryError> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(GeometryError::InvalidDepth(depth));
    }
    Ok(pixel_ray(p, cam) * depth)
}

#[inline]
pub fn transform_point(p: &Vec3, pose: &Pose, direction: Direction) -> Vec3 {
    match direction {
        Direction::CamToWorld => pose.rotation * p + pose.translation,
        Direction::WorldToCam => pose
            .rotation
            .inverse_transform_vector(&(p - pose.translation)),
    }
}

/// Pose of camera `b` expressed in camera `a`'s frame.
pub fn relative_pose(a: &Pose, b: &Pose) -> Pose {
    let ra_inv = a.rotation.inverse();
    Pose {
        rotation: renormalize(ra_inv * b.rotation),
        translation: ra_inv * (b.translation - a.translation),
    }
}

//! Camera path smoothing by normalized Gaussian filtering.
//!
//! Translations are averaged directly. Rotations are averaged in unit
//! quaternion space: every quaternion in a window is first flipped onto the
//! hemisphere of the window's center quaternion, then the weighted sum is
//! renormalized. Windows are clamped to the sequence and their weights
//! renormalized, so every output is a convex combination of real frames.

use nalgebra::{Quaternion, UnitQuaternion};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};
use crate::par;

/// Weighted quaternion sums shorter than this are treated as cancelled.
pub const DEGENERATE_ROTATION_NORM: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothingError {
    #[error("invalid smoothing parameters: {0}")]
    InvalidParams(String),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("rotation average cancels out at frame {frame}")]
    DegenerateRotation { frame: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub fps: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams {
    /// Gaussian bandwidth in frames.
    pub sigma: f64,
    /// Temporal radius in frames.
    pub radius: usize,
}

impl SmoothingParams {
    /// Bandwidth `sigma` with the default radius `ceil(3 sigma)`.
    pub fn new(sigma: f64) -> Self {
        SmoothingParams {
            sigma,
            radius: Self::default_radius(sigma),
        }
    }

    pub fn with_radius(sigma: f64, radius: usize) -> Self {
        SmoothingParams { sigma, radius }
    }

    pub fn default_radius(sigma: f64) -> usize {
        if sigma.is_finite() && sigma > 0.0 {
            (3.0 * sigma).ceil() as usize
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<(), SmoothingError> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(SmoothingError::InvalidParams(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams::new(8.0)
    }
}

/// Normalized weights over one clamped window.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Index of the first frame the weights apply to.
    pub start: usize,
    pub weights: Vec<f64>,
}

impl Window {
    pub fn indices(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(j, &w)| (self.start + j, w))
    }
}

/// Gaussian weights for center `k` over `[k-radius, k+radius] ∩ [0, n-1]`,
/// normalized to sum to one.
pub fn gaussian_weights(k: usize, radius: usize, sigma: f64, n: usize) -> Window {
    assert!(k < n, "center {k} outside trajectory of length {n}");
    let start = k.saturating_sub(radius);
    let end = k.saturating_add(radius).min(n - 1);
    let two_var = 2.0 * sigma * sigma;
    let mut weights: Vec<f64> = (start..=end)
        .map(|i| {
            let d = i as f64 - k as f64;
            (-(d * d) / two_var).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Window { start, weights }
}

fn check(traj: &Trajectory, p: &SmoothingParams) -> Result<(), SmoothingError> {
    p.validate()?;
    if traj.is_empty() {
        return Err(SmoothingError::EmptyTrajectory);
    }
    Ok(())
}

pub fn smooth_translations(
    traj: &Trajectory,
    p: &SmoothingParams,
) -> Result<Vec<Vec3>, SmoothingError> {
    check(traj, p)?;
    let n = traj.len();
    Ok(par::map_range(n, |k| {
        gaussian_weights(k, p.radius, p.sigma, n)
            .indices()
            .fold(Vec3::zeros(), |acc, (i, w)| {
                acc + traj.poses[i].translation * w
            })
    }))
}

/// Weighted quaternion mean of one window, sign-aligned to `center`.
fn average_rotation(poses: &[Pose], window: &Window, center: usize) -> Option<UnitQuaternion<f64>> {
    let reference = poses[center].rotation.into_inner();
    let mut acc = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    for (i, w) in window.indices() {
        let q = poses[i].rotation.into_inner();
        let aligned = if q.dot(&reference) < 0.0 { -q } else { q };
        acc += aligned * w;
    }
    let norm = acc.norm();
    (norm >= DEGENERATE_ROTATION_NORM).then(|| UnitQuaternion::new_unchecked(acc / norm))
}

pub fn smooth_rotations(
    traj: &Trajectory,
    p: &SmoothingParams,
) -> Result<Vec<UnitQuaternion<f64>>, SmoothingError> {
    check(traj, p)?;
    let n = traj.len();
    par::try_map_range(n, |k| {
        let window = gaussian_weights(k, p.radius, p.sigma, n);
        average_rotation(&traj.poses, &window, k)
            .ok_or(SmoothingError::DegenerateRotation { frame: k })
    })
}

/// Smooths the extrinsics of `traj`; output has the same length and fps.
pub fn smooth_trajectory(
    traj: &Trajectory,
    p: &SmoothingParams,
) -> Result<Trajectory, SmoothingError> {
    let translations = smooth_translations(traj, p)?;
    let rotations = smooth_rotations(traj, p)?;
    Ok(Trajectory {
        poses: rotations
            .into_iter()
            .zip(translations)
            .map(|(r, t)| Pose::new(r, t))
            .collect(),
        fps: traj.fps,
    })
}

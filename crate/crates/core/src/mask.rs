//! Hybrid dynamic masks: semantic masks fused with a geometric mask obtained
//! by thresholding the residual between observed flow and the flow induced by
//! camera motion alone.

use thiserror::Error;

use crate::bundle::Bundle;
use crate::flow::FlowField;
use crate::geometry::{project, transform_point, unproject, Direction, Pixel};
use crate::grid::BinaryMask;
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("tau must be positive and finite, got {0}")]
    InvalidTau(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskParams {
    /// Residual threshold in pixels.
    pub tau: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        MaskParams { tau: 2.0 }
    }
}

impl MaskParams {
    pub fn validate(&self) -> Result<(), MaskError> {
        if self.tau > 0.0 && self.tau.is_finite() {
            Ok(())
        } else {
            Err(MaskError::InvalidTau(self.tau))
        }
    }
}

/// Flow from frame `t` to `t + 1` that a static scene would produce under
/// the bundle's camera motion. Both projections use frame `t`'s intrinsics.
///
/// Pixels with invalid depth, or whose point leaves the projection domain
/// of camera `t + 1`, are invalid.
pub fn rigid_flow(b: &Bundle, t: usize) -> FlowField {
    assert!(
        t + 1 < b.n_frames(),
        "rigid flow needs frame {} to exist",
        t + 1
    );
    let (cam, pose_t) = &b.cameras[t];
    let pose_next = &b.cameras[t + 1].1;
    let depth = &b.depths[t];
    FlowField::from_fn(depth.width(), depth.height(), |x, y| {
        let p = Pixel::new(x as f64, y as f64);
        let x_cam = unproject(p, depth[(x, y)] as f64, cam).ok()?;
        let x_world = transform_point(&x_cam, pose_t, Direction::CamToWorld);
        let x_next = transform_point(&x_world, pose_next, Direction::WorldToCam);
        let q = project(&x_next, cam).ok()?;
        Some([(q.u - p.u) as f32, (q.v - p.v) as f32])
    })
}

/// `true` where both flows are valid and `‖observed − rigid‖₂ > tau`.
pub fn flow_residual_mask(
    observed: &FlowField,
    rigid: &FlowField,
    params: &MaskParams,
) -> Result<BinaryMask, MaskError> {
    params.validate()?;
    if observed.dims() != rigid.dims() {
        return Err(MaskError::DimensionMismatch(observed.dims(), rigid.dims()));
    }
    let (w, h) = observed.dims();
    Ok(BinaryMask::from_fn(w, h, |x, y| {
        match (observed.get(x, y), rigid.get(x, y)) {
            (Some(o), Some(r)) => {
                let du = o[0] as f64 - r[0] as f64;
                let dv = o[1] as f64 - r[1] as f64;
                du.hypot(dv) > params.tau
            }
            _ => false,
        }
    }))
}

/// Pixelwise union.
pub fn combine_masks(
    semantic: &BinaryMask,
    geometric: &BinaryMask,
) -> Result<BinaryMask, MaskError> {
    if !semantic.same_dims(geometric) {
        return Err(MaskError::DimensionMismatch(
            semantic.dims(),
            geometric.dims(),
        ));
    }
    let (w, h) = semantic.dims();
    Ok(BinaryMask::from_fn(w, h, |x, y| {
        semantic[(x, y)] || geometric[(x, y)]
    }))
}

/// Combined mask of every frame, optionally dilated by `dilate` pixels.
///
/// The last frame has no forward flow, so its geometric mask is empty and
/// only the semantic mask contributes.
pub fn hybrid_masks(
    b: &Bundle,
    params: &MaskParams,
    dilate: usize,
) -> Result<Vec<BinaryMask>, MaskError> {
    params.validate()?;
    let n = b.n_frames();
    par::try_map_range(n, |t| {
        let combined = if t + 1 < n {
            let fm = flow_residual_mask(&b.flows[t], &rigid_flow(b, t), params)?;
            combine_masks(&b.semantic_masks[t], &fm)?
        } else {
            b.semantic_masks[t].clone()
        };
        Ok(combined.dilate(dilate))
    })
}

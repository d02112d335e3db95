//! Evaluation metrics: cropping ratio, stability score, epipolar Sampson
//! error and warping error.

mod epipolar;
mod stability;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use epipolar::{
    eight_point, fundamental_from_matches, fundamental_from_poses, grid_correspondences,
    sampson_error, sampson_pair, Correspondence, FundamentalEstimate, RansacParams, SampsonSummary,
};
pub use stability::{
    band_energy_ratio, rotation_profile, spectral_score, stability_score, translation_profile,
    LOW_BAND, MIN_STABILITY_FRAMES,
};

use crate::flow::FlowField;
use crate::geometry::CameraModel;
use crate::grid::BinaryMask;
use crate::par;

/// Grid resolution for flow-induced ESE correspondences.
pub const ESE_GRID: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("sequence of {len} frames is too short (need {min})")]
    TooShort { len: usize, min: usize },
    #[error("empty input")]
    Empty,
    #[error("relative translation too small for a fundamental matrix")]
    DegenerateBaseline,
    #[error("fundamental matrices need perspective cameras, got {0:?}")]
    UnsupportedModel(CameraModel),
    #[error("need at least 8 matches, got {0}")]
    InsufficientMatches(usize),
    #[error("no sample produced a well-conditioned fundamental matrix")]
    DegenerateConfiguration,
    #[error("all {skipped} pairs had a vanishing Sampson denominator")]
    EmptyAfterFiltering { skipped: usize },
    #[error("{frames} frames need {} flow fields, got {flows}", frames.saturating_sub(1))]
    LengthMismatch { frames: usize, flows: usize },
    #[error("dimension mismatch at frame {0}")]
    DimensionMismatch(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub coverage: f64,
    /// Sampson error of the pair `(frame, frame + 1)`.
    pub ese_px2: Option<f64>,
    /// Warping error of the pair `(frame, frame + 1)`, ×1e-3 units.
    pub we_x1e3: Option<f64>,
}

/// Sequence-level scores. LPIPS is not computed and serializes as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cropping: f64,
    pub stability: f64,
    pub ese_px2: f64,
    pub we_x1e3: f64,
    pub lpips: Option<f64>,
    pub per_frame: Vec<FrameMetrics>,
}

/// Fraction of covered pixels, averaged over frames.
pub fn cropping_ratio(coverage: &[BinaryMask]) -> Result<f64, MetricError> {
    if coverage.is_empty() {
        return Err(MetricError::Empty);
    }
    let per_frame: f64 = coverage
        .iter()
        .map(|m| m.count_true() as f64 / m.len().max(1) as f64)
        .sum();
    Ok(per_frame / coverage.len() as f64)
}

fn bilinear(img: &RgbImage, u: f64, v: f64) -> [f64; 3] {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (ax, ay) = (u - x0 as f64, v - y0 as f64);
    let at = |x: usize, y: usize| img.get_pixel(x as u32, y as u32).0;
    let (p00, p10, p01, p11) = (at(x0, y0), at(x1, y0), at(x0, y1), at(x1, y1));
    [0, 1, 2].map(|c| {
        let top = p00[c] as f64 * (1.0 - ax) + p10[c] as f64 * ax;
        let bottom = p01[c] as f64 * (1.0 - ax) + p11[c] as f64 * ax;
        (top * (1.0 - ay) + bottom * ay) / 255.0
    })
}

/// Mean squared color difference in `[0, 1]` units between frame `t` and
/// frame `t + 1` sampled along the flow; `None` if no pixel qualifies.
pub fn warp_mse(a: &RgbImage, b: &RgbImage, flow: &FlowField) -> Option<f64> {
    let (w, h) = flow.dims();
    let (mut sum, mut count) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            let Some([du, dv]) = flow.get(x, y) else {
                continue;
            };
            let (u, v) = (x as f64 + du as f64, y as f64 + dv as f64);
            if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
                continue;
            }
            let warped = bilinear(b, u, v);
            let src = a.get_pixel(x as u32, y as u32).0;
            for c in 0..3 {
                let d = src[c] as f64 / 255.0 - warped[c];
                sum += d * d;
            }
            count += 3;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpingSummary {
    /// Mean MSE divided by 1e-3.
    pub we_x1e3: f64,
    pub per_pair: Vec<Option<f64>>,
}

/// Warping error of a sequence; pairs without valid pixels are excluded
/// from the mean (which is 0 if no pair qualifies).
pub fn warping_error(
    frames: &[RgbImage],
    flows: &[FlowField],
) -> Result<WarpingSummary, MetricError> {
    if frames.is_empty() || flows.len() + 1 != frames.len() {
        return Err(MetricError::LengthMismatch {
            frames: frames.len(),
            flows: flows.len(),
        });
    }
    for (t, f) in flows.iter().enumerate() {
        let dims = |img: &RgbImage| (img.width() as usize, img.height() as usize);
        if f.dims() != dims(&frames[t]) || f.dims() != dims(&frames[t + 1]) {
            return Err(MetricError::DimensionMismatch(t));
        }
    }
    let per_pair: Vec<Option<f64>> = par::map_range(flows.len(), |t| {
        warp_mse(&frames[t], &frames[t + 1], &flows[t]).map(|mse| mse / 1e-3)
    });
    let valid: Vec<f64> = per_pair.iter().flatten().copied().collect();
    let we_x1e3 = if valid.is_empty() {
        0.0
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    };
    Ok(WarpingSummary { we_x1e3, per_pair })
}

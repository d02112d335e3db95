//! End-to-end stabilization and sequence evaluation.

use image::RgbImage;
use thiserror::Error;

use crate::bundle::{Bundle, BundleError};
use crate::flow::FlowField;
use crate::geometry::{CameraIntrinsics, CameraModel};
use crate::grid::BinaryMask;
use crate::mask::{hybrid_masks, MaskError, MaskParams};
use crate::metrics::{
    cropping_ratio, fundamental_from_matches, fundamental_from_poses, grid_correspondences,
    sampson_error, stability_score, warping_error, Correspondence, FrameMetrics, MetricError,
    MetricReport, RansacParams, ESE_GRID,
};
use crate::par;
use crate::render::{build_point_set, fill_holes, induced_flow, render, FillStats, RenderParams};
use crate::smoothing::{smooth_trajectory, SmoothingError, SmoothingParams, Trajectory};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizeConfig {
    pub sigma: f64,
    /// Defaults to `ceil(3σ)`.
    pub radius: Option<usize>,
    pub tau: f64,
    pub window_n: usize,
    pub splat_radius: usize,
    /// Output projection; defaults to the bundle's model.
    pub render_model: Option<CameraModel>,
    /// Seeds the consensus loop of match-based evaluation.
    pub seed: u64,
    pub mask_dilate: bool,
    pub emit_diagnostics: bool,
}

impl Default for StabilizeConfig {
    fn default() -> Self {
        StabilizeConfig {
            sigma: 8.0,
            radius: None,
            tau: 2.0,
            window_n: 3,
            splat_radius: 1,
            render_model: None,
            seed: 0,
            mask_dilate: true,
            emit_diagnostics: false,
        }
    }
}

impl StabilizeConfig {
    pub fn smoothing(&self) -> SmoothingParams {
        match self.radius {
            Some(r) => SmoothingParams::with_radius(self.sigma, r),
            None => SmoothingParams::new(self.sigma),
        }
    }

    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            window_n: self.window_n,
            splat_radius: self.splat_radius,
            ..RenderParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.smoothing().validate()?;
        MaskParams { tau: self.tau }.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizeOutput {
    pub raw: Trajectory,
    pub smoothed: Trajectory,
    pub render_model: CameraModel,
    /// Intrinsics each output frame was rendered with.
    pub render_cams: Vec<CameraIntrinsics>,
    /// Combined dynamic masks, after optional dilation.
    pub masks: Vec<BinaryMask>,
    /// Coverage of the primary render, before hole filling.
    pub raw_coverage: Vec<BinaryMask>,
    pub frames: Vec<RgbImage>,
    pub temporal_fill: Vec<BinaryMask>,
    pub fill_stats: Vec<FillStats>,
    /// Flow between consecutive output frames, following rendered static
    /// points; invalid on filled and dynamic pixels.
    pub flows: Vec<FlowField>,
}

impl StabilizeOutput {
    /// Pixels that do not carry the hole sentinel.
    pub fn coverage(&self) -> Vec<BinaryMask> {
        let hole = RenderParams::default().hole_color;
        self.frames
            .iter()
            .map(|f| {
                let (w, h) = (f.width() as usize, f.height() as usize);
                BinaryMask::from_fn(w, h, |x, y| f.get_pixel(x as u32, y as u32).0 != hole)
            })
            .collect()
    }
}

/// Smooths the trajectory, masks dynamic content, re-renders every frame
/// along the smoothed path and fills all holes.
pub fn stabilize(b: &Bundle, cfg: &StabilizeConfig) -> Result<StabilizeOutput, PipelineError> {
    b.validate()?;
    cfg.validate()?;
    let raw = b.trajectory();
    let smoothed = smooth_trajectory(&raw, &cfg.smoothing())?;
    let masks = hybrid_masks(
        b,
        &MaskParams { tau: cfg.tau },
        usize::from(cfg.mask_dilate),
    )?;
    let model = cfg.render_model.unwrap_or(b.cameras[0].0.model);
    let render_cams: Vec<CameraIntrinsics> =
        b.cameras.iter().map(|(c, _)| c.with_model(model)).collect();
    let p = cfg.render_params();
    let n = b.n_frames();

    let rendered = par::map_range(n, |t| {
        let ps = build_point_set(b, &masks, t, &p);
        let result = render(&ps, &smoothed.poses[t], &render_cams[t], &p);
        let flow = (t + 1 < n).then(|| {
            induced_flow(
                &result,
                &ps,
                (&smoothed.poses[t], &render_cams[t]),
                (&smoothed.poses[t + 1], &render_cams[t + 1]),
            )
        });
        (result, flow)
    });
    let (renders, flows): (Vec<_>, Vec<_>) = rendered.into_iter().unzip();
    let filled = fill_holes(&renders, b, &masks, &smoothed, &render_cams, &p);

    let raw_coverage = renders.into_iter().map(|r| r.coverage).collect();
    let mut frames = Vec::with_capacity(n);
    let mut temporal_fill = Vec::with_capacity(n);
    let mut fill_stats = Vec::with_capacity(n);
    for f in filled {
        frames.push(f.image);
        temporal_fill.push(f.temporal_mask);
        fill_stats.push(f.stats);
    }
    Ok(StabilizeOutput {
        raw,
        smoothed,
        render_model: model,
        render_cams,
        masks,
        raw_coverage,
        frames,
        temporal_fill,
        fill_stats,
        flows: flows.into_iter().flatten().collect(),
    })
}

/// Where ESE correspondences come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EseSource<'a> {
    /// Grid samples of the sequence flow, scored against the epipolar
    /// geometry of the given poses.
    Poses(&'a Trajectory),
    /// Explicit matches per consecutive pair, scored against a fundamental
    /// matrix estimated from them.
    Matches(&'a [Vec<Correspondence>]),
}

/// A sequence to score.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationInput<'a> {
    pub frames: &'a [RgbImage],
    pub coverage: &'a [BinaryMask],
    /// Camera path of the sequence, for the stability score.
    pub trajectory: &'a Trajectory,
    pub cams: &'a [CameraIntrinsics],
    pub flows: &'a [FlowField],
    pub ese: EseSource<'a>,
    pub seed: u64,
}

fn pair_ese(input: &EvaluationInput, t: usize) -> Option<f64> {
    match input.ese {
        EseSource::Poses(traj) => {
            let f = fundamental_from_poses(
                (&input.cams[t], &traj.poses[t]),
                (&input.cams[t + 1], &traj.poses[t + 1]),
            )
            .ok()?;
            let c = grid_correspondences(&input.flows[t], ESE_GRID);
            sampson_error(&c, &f).ok().map(|s| s.mean)
        }
        EseSource::Matches(all) => {
            let c = all.get(t)?;
            let params = RansacParams {
                seed: input.seed.wrapping_add(t as u64),
                ..RansacParams::default()
            };
            let est = fundamental_from_matches(c, &params).ok()?;
            sampson_error(c, &est.f).ok().map(|s| s.mean)
        }
    }
}

/// Scores a sequence. Pairs whose epipolar geometry is undefined (no
/// baseline, too few matches) are left out of the ESE mean.
pub fn evaluate(input: &EvaluationInput) -> Result<MetricReport, MetricError> {
    let n = input.frames.len();
    if input.coverage.len() != n || input.trajectory.len() != n || input.cams.len() != n {
        return Err(MetricError::LengthMismatch {
            frames: n,
            flows: input.flows.len(),
        });
    }
    if let EseSource::Poses(traj) = input.ese {
        if traj.len() != n {
            return Err(MetricError::LengthMismatch {
                frames: n,
                flows: input.flows.len(),
            });
        }
    }
    let we = warping_error(input.frames, input.flows)?;
    let cropping = cropping_ratio(input.coverage)?;
    let stability = stability_score(input.trajectory)?;
    let ese: Vec<Option<f64>> = par::map_range(n - 1, |t| pair_ese(input, t));
    let valid: Vec<f64> = ese.iter().flatten().copied().collect();
    let ese_px2 = if valid.is_empty() {
        0.0
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    };
    let per_frame = (0..n)
        .map(|t| FrameMetrics {
            frame: t,
            coverage: input.coverage[t].count_true() as f64 / input.coverage[t].len().max(1) as f64,
            ese_px2: ese.get(t).copied().flatten(),
            we_x1e3: we.per_pair.get(t).copied().flatten(),
        })
        .collect();
    Ok(MetricReport {
        cropping,
        stability,
        ese_px2,
        we_x1e3: we.we_x1e3,
        lpips: None,
        per_frame,
    })
}

impl StabilizeOutput {
    /// Evaluation input for this output with ground-truth epipolar geometry
    /// from the smoothed poses.
    pub fn evaluation_input<'a>(
        &'a self,
        coverage: &'a [BinaryMask],
        seed: u64,
    ) -> EvaluationInput<'a> {
        EvaluationInput {
            frames: &self.frames,
            coverage,
            trajectory: &self.smoothed,
            cams: &self.render_cams,
            flows: &self.flows,
            ese: EseSource::Poses(&self.smoothed),
            seed,
        }
    }
}

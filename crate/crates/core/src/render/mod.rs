//! Global-local point clouds and z-buffered point splatting.
//!
//! The static part of a frame's point set aggregates non-dynamic pixels from
//! a temporal window around it; the dynamic part comes only from the frame
//! itself. Rendering projects every point into the target camera and writes
//! a square splat wherever the point is strictly nearer than what the
//! z-buffer holds. Exact depth ties go to the smaller
//! `(source_frame, pixel_index)`, which makes the output independent of point
//! order.

mod fill;

use std::cmp::Ordering;

use image::{Rgb, RgbImage};

use crate::bundle::{pointmap_of_frame, Bundle};
use crate::flow::FlowField;
use crate::geometry::{project, transform_point, CameraIntrinsics, Direction, Pixel, Pose, Vec3};
use crate::grid::{BinaryMask, Grid};
use crate::par;

pub use fill::{fill_holes, pull_push, FillStats, FilledFrame};

/// Marks pixels no point landed on in [`RenderResult::winner`].
pub const NO_POINT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    pub position: Vec3,
    pub color: [u8; 3],
    pub source_frame: u32,
    /// Row-major index of the source pixel.
    pub pixel_index: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompositePointSet {
    pub static_points: Vec<ScenePoint>,
    pub dynamic_points: Vec<ScenePoint>,
}

impl CompositePointSet {
    pub fn len(&self) -> usize {
        self.static_points.len() + self.dynamic_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point by combined index: static points first, then dynamic.
    pub fn get(&self, i: usize) -> Option<&ScenePoint> {
        let s = self.static_points.len();
        if i < s {
            self.static_points.get(i)
        } else {
            self.dynamic_points.get(i - s)
        }
    }

    pub fn is_dynamic(&self, i: usize) -> bool {
        i >= self.static_points.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScenePoint> {
        self.static_points.iter().chain(&self.dynamic_points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    /// Half-width of the static aggregation window, in frames.
    pub window_n: usize,
    /// Splat half-size in pixels; 0 writes a single pixel.
    pub splat_radius: usize,
    /// Color of pixels no splat covers.
    pub hole_color: [u8; 3],
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            window_n: 3,
            splat_radius: 1,
            hole_color: [255, 0, 255],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderResult {
    pub image: RgbImage,
    pub coverage: BinaryMask,
    /// Depth of the visible point; `+inf` where nothing was drawn.
    pub zbuffer: Grid<f64>,
    /// Combined index of the visible point, or [`NO_POINT`].
    pub winner: Grid<u32>,
}

impl RenderResult {
    pub fn hole_count(&self) -> usize {
        self.coverage.len() - self.coverage.count_true()
    }
}

fn frame_points(b: &Bundle, cm: &BinaryMask, frame: usize, dynamic: bool) -> Vec<ScenePoint> {
    let pm = pointmap_of_frame(b, frame);
    let img = &b.frames[frame];
    let w = pm.width();
    pm.iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let (x, y) = (i % w, i / w);
            if cm[(x, y)] != dynamic {
                return None;
            }
            let position = (*p)?;
            Some(ScenePoint {
                position,
                color: img.get_pixel(x as u32, y as u32).0,
                source_frame: frame as u32,
                pixel_index: i as u32,
            })
        })
        .collect()
}

/// Points for frame `t`: static pixels of frames `t-n ..= t+n` (clamped)
/// and dynamic pixels of frame `t`. Invalid-depth pixels are skipped.
pub fn build_point_set(
    b: &Bundle,
    cm: &[BinaryMask],
    t: usize,
    p: &RenderParams,
) -> CompositePointSet {
    assert_eq!(cm.len(), b.n_frames(), "one combined mask per frame");
    let lo = t.saturating_sub(p.window_n);
    let hi = t.saturating_add(p.window_n).min(b.n_frames() - 1);
    let per_frame = par::map_range(hi - lo + 1, |j| frame_points(b, &cm[lo + j], lo + j, false));
    CompositePointSet {
        static_points: per_frame.into_iter().flatten().collect(),
        dynamic_points: frame_points(b, &cm[t], t, true),
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    depth: f64,
    source_frame: u32,
    pixel_index: u32,
}

impl Candidate {
    #[inline]
    fn beats(&self, other: &Candidate) -> bool {
        match self.depth.partial_cmp(&other.depth) {
            Some(Ordering::Less) => true,
            Some(Ordering::Equal) => {
                (self.source_frame, self.pixel_index) < (other.source_frame, other.pixel_index)
            }
            _ => false,
        }
    }
}

/// Renders `ps` as seen by a camera with intrinsics `cam` at `pose`.
pub fn render(
    ps: &CompositePointSet,
    pose: &Pose,
    cam: &CameraIntrinsics,
    p: &RenderParams,
) -> RenderResult {
    let (w, h) = (cam.width, cam.height);
    let points: Vec<&ScenePoint> = ps.iter().collect();
    let projected: Vec<Option<(Pixel, f64)>> = par::map_range(points.len(), |i| {
        let pt = points[i];
        let x_cam = transform_point(&pt.position, pose, Direction::WorldToCam);
        let px = project(&x_cam, cam).ok()?;
        let depth = cam.depth_of(&x_cam);
        (depth > 0.0).then_some((px, depth))
    });

    let mut best: Vec<Option<Candidate>> = vec![None; w * h];
    let mut winner = vec![NO_POINT; w * h];
    let r = p.splat_radius as i64;
    for (i, proj) in projected.iter().enumerate() {
        let Some((px, depth)) = *proj else { continue };
        let (cu, cv) = (px.u.round(), px.v.round());
        if !(cu.is_finite() && cv.is_finite()) {
            continue;
        }
        let (cu, cv) = (cu as i64, cv as i64);
        if cu + r < 0 || cv + r < 0 || cu - r >= w as i64 || cv - r >= h as i64 {
            continue;
        }
        let cand = Candidate {
            depth,
            source_frame: points[i].source_frame,
            pixel_index: points[i].pixel_index,
        };
        for y in (cv - r).max(0)..=(cv + r).min(h as i64 - 1) {
            for x in (cu - r).max(0)..=(cu + r).min(w as i64 - 1) {
                let idx = y as usize * w + x as usize;
                let wins = match &best[idx] {
                    None => true,
                    Some(cur) => cand.beats(cur),
                };
                if wins {
                    best[idx] = Some(cand);
                    winner[idx] = i as u32;
                }
            }
        }
    }

    let mut image = RgbImage::from_pixel(w as u32, h as u32, Rgb(p.hole_color));
    for (idx, &win) in winner.iter().enumerate() {
        if win != NO_POINT {
            image.put_pixel(
                (idx % w) as u32,
                (idx / w) as u32,
                Rgb(points[win as usize].color),
            );
        }
    }
    RenderResult {
        image,
        coverage: Grid::from_vec(w, h, winner.iter().map(|&i| i != NO_POINT).collect())
            .expect("w*h"),
        zbuffer: Grid::from_vec(
            w,
            h,
            best.iter()
                .map(|c| c.map_or(f64::INFINITY, |c| c.depth))
                .collect(),
        )
        .expect("w*h"),
        winner: Grid::from_vec(w, h, winner).expect("w*h"),
    }
}

/// Flow between two rendered views: each pixel moves with the static point
/// it displays, from that point's projection in the current view to its
/// projection in the next. Pixels showing dynamic points or nothing are
/// invalid.
pub fn induced_flow(
    result: &RenderResult,
    ps: &CompositePointSet,
    current: (&Pose, &CameraIntrinsics),
    next: (&Pose, &CameraIntrinsics),
) -> FlowField {
    let (w, h) = result.winner.dims();
    let proj = |pt: &ScenePoint, (pose, cam): (&Pose, &CameraIntrinsics)| {
        project(
            &transform_point(&pt.position, pose, Direction::WorldToCam),
            cam,
        )
        .ok()
    };
    FlowField::from_fn(w, h, |x, y| {
        let idx = result.winner[(x, y)];
        if idx == NO_POINT || ps.is_dynamic(idx as usize) {
            return None;
        }
        let pt = ps.get(idx as usize)?;
        let (a, b) = (proj(pt, current)?, proj(pt, next)?);
        Some([(b.u - a.u) as f32, (b.v - a.v) as f32])
    })
}

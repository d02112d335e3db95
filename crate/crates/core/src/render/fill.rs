//! Deterministic hole filling for rendered frames.
//!
//! Pass one re-renders the frame from progressively wider temporal windows
//! and copies colors into pixels that were holes. Pass two fills whatever
//! remains with pull-push interpolation over an image pyramid.

use image::{Rgb, RgbImage};

use super::{build_point_set, render, RenderParams, RenderResult};
use crate::bundle::Bundle;
use crate::geometry::CameraIntrinsics;
use crate::grid::BinaryMask;
use crate::par;
use crate::smoothing::Trajectory;

/// Extra window half-widths tried by the temporal pass, in order.
pub const TEMPORAL_WINDOW_STEPS: [usize; 2] = [2, 4];

/// Color used when a frame has no covered pixel at all.
const EMPTY_FRAME_GRAY: [u8; 3] = [128, 128, 128];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FillStats {
    /// Holes left by the primary render.
    pub initial_holes: usize,
    /// Holes resolved by wider-window re-rendering.
    pub temporal: usize,
    /// Holes resolved by pull-push interpolation.
    pub spatial: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilledFrame {
    pub image: RgbImage,
    pub stats: FillStats,
    /// Pixels filled by the temporal pass.
    pub temporal_mask: BinaryMask,
}

/// Fills the holes of every rendered frame.
///
/// `render_cams[t]` must be the intrinsics `seq[t]` was rendered with and
/// `masks` the combined dynamic masks used to build the point sets.
pub fn fill_holes(
    seq: &[RenderResult],
    b: &Bundle,
    masks: &[BinaryMask],
    smoothed: &Trajectory,
    render_cams: &[CameraIntrinsics],
    p: &RenderParams,
) -> Vec<FilledFrame> {
    assert_eq!(seq.len(), smoothed.len(), "one render per smoothed pose");
    assert_eq!(seq.len(), render_cams.len(), "one camera per render");
    par::map_range(seq.len(), |t| {
        fill_frame(&seq[t], t, b, masks, smoothed, &render_cams[t], p)
    })
}

fn fill_frame(
    rendered: &RenderResult,
    t: usize,
    b: &Bundle,
    masks: &[BinaryMask],
    smoothed: &Trajectory,
    cam: &CameraIntrinsics,
    p: &RenderParams,
) -> FilledFrame {
    let mut image = rendered.image.clone();
    let mut known = rendered.coverage.clone();
    let (w, h) = known.dims();
    let initial_holes = rendered.hole_count();
    let mut temporal_mask = BinaryMask::filled(w, h, false);
    let mut temporal = 0;

    for extra in TEMPORAL_WINDOW_STEPS {
        if temporal == initial_holes {
            break;
        }
        let wider = RenderParams {
            window_n: p.window_n + extra,
            ..*p
        };
        let ps = build_point_set(b, masks, t, &wider);
        let again = render(&ps, &smoothed.poses[t], cam, &wider);
        for y in 0..h {
            for x in 0..w {
                if !known[(x, y)] && again.coverage[(x, y)] {
                    known[(x, y)] = true;
                    temporal_mask[(x, y)] = true;
                    image.put_pixel(
                        x as u32,
                        y as u32,
                        *again.image.get_pixel(x as u32, y as u32),
                    );
                    temporal += 1;
                }
            }
        }
    }

    let spatial = initial_holes - temporal;
    if spatial > 0 {
        image = pull_push(&image, &known);
    }
    FilledFrame {
        image,
        stats: FillStats {
            initial_holes,
            temporal,
            spatial,
        },
        temporal_mask,
    }
}

struct Level {
    width: usize,
    height: usize,
    color: Vec<[f64; 3]>,
    weight: Vec<f64>,
}

impl Level {
    fn sample_bilinear(&self, fx: f64, fy: f64) -> [f64; 3] {
        let fx = fx.clamp(0.0, (self.width - 1) as f64);
        let fy = fy.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
        let at = |x: usize, y: usize| self.color[y * self.width + x];
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let top = at(x0, y0)[c] * (1.0 - ax) + at(x1, y0)[c] * ax;
            let bottom = at(x0, y1)[c] * (1.0 - ax) + at(x1, y1)[c] * ax;
            *o = top * (1.0 - ay) + bottom * ay;
        }
        out
    }
}

/// Pull-push interpolation: pixels where `known` is true are kept verbatim,
/// the rest are filled from a weighted pyramid of the known ones.
pub fn pull_push(image: &RgbImage, known: &BinaryMask) -> RgbImage {
    let (w, h) = (image.width() as usize, image.height() as usize);
    assert_eq!(known.dims(), (w, h), "mask must match image");
    if known.count_true() == 0 {
        return RgbImage::from_pixel(w as u32, h as u32, Rgb(EMPTY_FRAME_GRAY));
    }

    let base = Level {
        width: w,
        height: h,
        color: image
            .pixels()
            .map(|p| [p.0[0] as f64, p.0[1] as f64, p.0[2] as f64])
            .collect(),
        weight: known.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect(),
    };
    let mut pyramid = vec![base];

    // Pull: weighted 2x2 averages, weights saturating at one.
    while pyramid.last().is_some_and(|l| l.width > 1 || l.height > 1) {
        let fine = pyramid.last().unwrap();
        let (cw, ch) = (fine.width.div_ceil(2), fine.height.div_ceil(2));
        let mut color = vec![[0.0; 3]; cw * ch];
        let mut weight = vec![0.0; cw * ch];
        for cy in 0..ch {
            for cx in 0..cw {
                let mut acc = [0.0; 3];
                let mut wsum = 0.0;
                for y in 2 * cy..(2 * cy + 2).min(fine.height) {
                    for x in 2 * cx..(2 * cx + 2).min(fine.width) {
                        let i = y * fine.width + x;
                        let wt = fine.weight[i];
                        for c in 0..3 {
                            acc[c] += wt * fine.color[i][c];
                        }
                        wsum += wt;
                    }
                }
                let i = cy * cw + cx;
                if wsum > 0.0 {
                    color[i] = [acc[0] / wsum, acc[1] / wsum, acc[2] / wsum];
                }
                weight[i] = wsum.min(1.0);
            }
        }
        pyramid.push(Level {
            width: cw,
            height: ch,
            color,
            weight,
        });
    }

    // Push: blend each level's missing mass from the completed level above.
    for l in (0..pyramid.len() - 1).rev() {
        let (upper, lower) = pyramid.split_at_mut(l + 1);
        let fine = &mut upper[l];
        let coarse = &lower[0];
        for y in 0..fine.height {
            for x in 0..fine.width {
                let i = y * fine.width + x;
                let wt = fine.weight[i];
                if wt >= 1.0 {
                    continue;
                }
                let up = coarse
                    .sample_bilinear((x as f64 + 0.5) / 2.0 - 0.5, (y as f64 + 0.5) / 2.0 - 0.5);
                for c in 0..3 {
                    fine.color[i][c] = wt * fine.color[i][c] + (1.0 - wt) * up[c];
                }
                fine.weight[i] = 1.0;
            }
        }
    }

    let filled = &pyramid[0];
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            if !known[(x, y)] {
                let c = filled.color[y * w + x];
                let px = [0, 1, 2].map(|k| c[k].round().clamp(0.0, 255.0) as u8);
                out.put_pixel(x as u32, y as u32, Rgb(px));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn constant_surround_fills_with_constant() {
        let img = RgbImage::from_pixel(9, 7, Rgb([40, 90, 200]));
        let mut known = BinaryMask::filled(9, 7, true);
        let mut holed = img.clone();
        holed.put_pixel(4, 3, Rgb([255, 0, 255]));
        known[(4, 3)] = false;
        assert_eq!(pull_push(&holed, &known), img);
    }

    #[test]
    fn known_pixels_untouched_and_no_holes_left() {
        let img = RgbImage::from_fn(13, 11, |x, y| Rgb([(x * 19) as u8, (y * 23) as u8, 7]));
        let known = Grid::from_fn(13, 11, |x, y| x < 5 || y > 8);
        let out = pull_push(&img, &known);
        for y in 0..11 {
            for x in 0..13 {
                if known[(x, y)] {
                    assert_eq!(
                        out.get_pixel(x as u32, y as u32),
                        img.get_pixel(x as u32, y as u32)
                    );
                }
            }
        }
    }

    #[test]
    fn linear_gradient_interpolates_inside_range() {
        let img = RgbImage::from_fn(16, 1, |x, _| Rgb([(x * 10) as u8, 0, 0]));
        let known = Grid::from_fn(16, 1, |x, _| x == 0 || x == 15);
        let out = pull_push(&img, &known);
        let reds: Vec<u8> = out.pixels().map(|p| p.0[0]).collect();
        assert_eq!(reds[0], 0);
        assert_eq!(reds[15], 150);
        assert!(reds.iter().all(|&r| r <= 150));
    }

    #[test]
    fn empty_frame_becomes_gray() {
        let img = RgbImage::from_pixel(3, 3, Rgb([255, 0, 255]));
        let out = pull_push(&img, &BinaryMask::filled(3, 3, false));
        assert!(out.pixels().all(|p| p.0 == EMPTY_FRAME_GRAY));
    }
}

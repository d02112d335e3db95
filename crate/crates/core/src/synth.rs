//! Deterministic synthetic scenes built from textured axis-aligned
//! rectangles, rendered by analytic ray casting so that depth, flow, masks
//! and poses are exact.

use std::f64::consts::TAU;

use image::{Rgb, RgbImage};
use nalgebra::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::Bundle;
use crate::flow::FlowField;
use crate::geometry::{
    pixel_ray, project, transform_point, CameraIntrinsics, CameraModel, Direction, Pixel, Pose,
    Vec3,
};
use crate::grid::{BinaryMask, DepthMap, Grid};
use crate::par;
use crate::smoothing::Trajectory;

/// Frequency bins (cycles per sequence) carrying the jitter.
pub const JITTER_BAND: (usize, usize) = (8, 16);

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("malformed scene spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scene spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two in-plane axes, in increasing order.
    fn tangents(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (0, 2),
            Axis::Z => (0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Texture {
    Checker {
        cell: f64,
        colors: [[u8; 3]; 2],
    },
    /// Smooth value noise blending between two colors.
    Noise {
        cell: f64,
        colors: [[u8; 3]; 2],
    },
}

/// Rectangle on the plane `x[normal] = offset`, spanning `min..max` along
/// the two remaining axes (in x, y, z order).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSpec {
    pub normal: Axis,
    pub offset: f64,
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub texture: Texture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoverSpec {
    pub rect: RectSpec,
    /// World displacement per frame.
    pub velocity: [f64; 3],
}

/// Lateral dolly with an optional constant yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePath {
    pub origin: [f64; 3],
    /// World displacement per frame.
    pub velocity: [f64; 3],
    /// Rotation about the world y axis per frame, radians.
    #[serde(default)]
    pub yaw_rate: f64,
}

/// RMS amplitudes of the band-limited pose perturbation, per axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterSpec {
    /// World units.
    pub translation: [f64; 3],
    /// Radians, as a rotation vector in the camera frame.
    pub rotation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_frames: usize,
    pub width: usize,
    pub height: usize,
    pub camera_model: CameraModel,
    /// Focal length in pixels (ignored for equirectangular).
    pub focal: f64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub rectangles: Vec<RectSpec>,
    #[serde(default)]
    pub movers: Vec<MoverSpec>,
    pub base_path: BasePath,
    #[serde(default)]
    pub jitter: JitterSpec,
}

fn default_fps() -> f64 {
    30.0
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: SceneSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::Invalid(msg));
        if self.n_frames < 2 {
            return bad(format!(
                "n_frames must be at least 2, got {}",
                self.n_frames
            ));
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!(
                "resolution {}x{} is empty",
                self.width, self.height
            ));
        }
        if self.rectangles.is_empty() {
            return bad("at least one static rectangle is required".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        self.intrinsics()
            .validate()
            .map_err(|e| SynthError::Invalid(e.to_string()))?;
        let rects = self
            .rectangles
            .iter()
            .chain(self.movers.iter().map(|m| &m.rect));
        for (i, r) in rects.enumerate() {
            let cell = match r.texture {
                Texture::Checker { cell, .. } | Texture::Noise { cell, .. } => cell,
            };
            if !(cell > 0.0 && cell.is_finite()) {
                return bad(format!("rectangle {i}: texture cell must be positive"));
            }
            if !(r.min[0] < r.max[0] && r.min[1] < r.max[1]) {
                return bad(format!("rectangle {i}: empty extent"));
            }
        }
        let j = &self.jitter;
        if j.translation
            .iter()
            .chain(&j.rotation)
            .any(|a| !(*a >= 0.0 && a.is_finite()))
        {
            return bad("jitter amplitudes must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            model: self.camera_model,
            fx: self.focal,
            fy: self.focal,
            cx: (self.width as f64 - 1.0) / 2.0,
            cy: (self.height as f64 - 1.0) / 2.0,
            width: self.width,
            height: self.height,
        }
    }

    /// Jitter-free camera path.
    pub fn base_trajectory(&self) -> Trajectory {
        let b = &self.base_path;
        let poses = (0..self.n_frames)
            .map(|k| {
                let k = k as f64;
                Pose::new(
                    UnitQuaternion::from_axis_angle(&Vec3::y_axis(), b.yaw_rate * k),
                    Vec3::from(b.origin) + Vec3::from(b.velocity) * k,
                )
            })
            .collect();
        Trajectory {
            poses,
            fps: self.fps,
        }
    }

    /// Six-wall room around the origin with two interior panels, viewed by a
    /// dollying camera. Every camera ray hits a surface.
    pub fn room(
        seed: u64,
        n_frames: usize,
        width: usize,
        height: usize,
        model: CameraModel,
    ) -> Self {
        let focal = match model {
            CameraModel::Perspective => 0.8 * width as f64,
            CameraModel::FisheyeEquidistant => width as f64 / 3.0,
            CameraModel::Equirectangular => 1.0,
        };
        let noise = |a: [u8; 3], b: [u8; 3], cell: f64| Texture::Noise {
            cell,
            colors: [a, b],
        };
        let checker = |a: [u8; 3], b: [u8; 3], cell: f64| Texture::Checker {
            cell,
            colors: [a, b],
        };
        let wall = |normal, offset, min, max, texture| RectSpec {
            normal,
            offset,
            min,
            max,
            texture,
        };
        let rectangles = vec![
            wall(
                Axis::Z,
                8.0,
                [-10.0, -6.0],
                [10.0, 6.0],
                noise([200, 180, 120], [60, 90, 160], 0.6),
            ),
            wall(
                Axis::Z,
                -8.0,
                [-10.0, -6.0],
                [10.0, 6.0],
                noise([90, 160, 90], [210, 200, 190], 0.6),
            ),
            wall(
                Axis::X,
                -10.0,
                [-6.0, -8.0],
                [6.0, 8.0],
                noise([170, 90, 90], [230, 220, 160], 0.5),
            ),
            wall(
                Axis::X,
                10.0,
                [-6.0, -8.0],
                [6.0, 8.0],
                noise([80, 80, 170], [180, 220, 230], 0.5),
            ),
            wall(
                Axis::Y,
                6.0,
                [-10.0, -8.0],
                [10.0, 8.0],
                noise([120, 100, 80], [200, 170, 140], 0.4),
            ),
            wall(
                Axis::Y,
                -6.0,
                [-10.0, -8.0],
                [10.0, 8.0],
                noise([230, 230, 230], [150, 170, 200], 0.8),
            ),
            wall(
                Axis::Z,
                4.5,
                [-2.5, -1.0],
                [-0.5, 1.5],
                checker([240, 120, 40], [40, 60, 200], 0.25),
            ),
            wall(
                Axis::Z,
                5.5,
                [1.0, -2.0],
                [3.0, 0.5],
                noise([30, 200, 120], [240, 240, 60], 0.2),
            ),
        ];
        SceneSpec {
            seed,
            n_frames,
            width,
            height,
            camera_model: model,
            focal,
            fps: 30.0,
            rectangles,
            movers: Vec::new(),
            base_path: BasePath {
                origin: [-0.6, 0.0, 0.0],
                velocity: [1.2 / n_frames.max(1) as f64, 0.0, 0.0],
                yaw_rate: 0.0,
            },
            jitter: JitterSpec::default(),
        }
    }

    /// The default jittered benchmark scene: 64 frames at 256×256.
    pub fn default_jittered() -> Self {
        SceneSpec {
            jitter: JitterSpec {
                translation: [0.02, 0.015, 0.01],
                rotation: [0.004, 0.004, 0.002],
            },
            ..SceneSpec::room(7, 64, 256, 256, CameraModel::Perspective)
        }
    }

    /// Static room plus one box face translating sideways and towards the camera.
    pub fn with_mover(mut self) -> Self {
        self.movers.push(MoverSpec {
            rect: RectSpec {
                normal: Axis::Z,
                offset: 4.0,
                min: [-1.0, 0.5],
                max: [0.5, 2.0],
                texture: Texture::Checker {
                    cell: 0.3,
                    colors: [[250, 250, 250], [200, 20, 20]],
                },
            },
            velocity: [0.12, 0.0, -0.01],
        });
        self
    }
}

/// The named scenes the test suites run end to end: the default jittered
/// scene, a jittered scene with a mover, and fisheye and equirectangular
/// rooms.
pub fn corpus() -> Vec<(&'static str, SceneSpec)> {
    let jitter = SceneSpec::default_jittered().jitter;
    let small = |seed, model, w, h| SceneSpec {
        jitter,
        ..SceneSpec::room(seed, 32, w, h, model)
    };
    vec![
        ("default", SceneSpec::default_jittered()),
        (
            "mover",
            small(11, CameraModel::Perspective, 128, 128).with_mover(),
        ),
        (
            "fisheye",
            small(12, CameraModel::FisheyeEquidistant, 128, 128),
        ),
        ("equirect", small(13, CameraModel::Equirectangular, 192, 96)),
    ]
}

/// One rectangle of the scene, with the frame index it is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Surface {
    rect: RectSpec,
    shift: Vec3,
    id: u64,
    dynamic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter; equals the camera model's depth for rays from
    /// [`pixel_ray`].
    pub depth: f64,
    pub point: Vec3,
    pub color: [u8; 3],
    /// Index into the mover list, if the surface moves.
    pub mover: Option<usize>,
}

/// Analytic scene for ray queries at any frame time.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    seed: u64,
    statics: Vec<RectSpec>,
    movers: Vec<MoverSpec>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, id: u64, i: i64, j: i64) -> f64 {
    let h = splitmix(seed ^ splitmix(id ^ splitmix((i as u64) ^ splitmix(j as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn texture_color(tex: &Texture, seed: u64, id: u64, s: f64, t: f64) -> [u8; 3] {
    let mix = |colors: &[[u8; 3]; 2], a: f64| {
        [0, 1, 2].map(|c| (colors[0][c] as f64 * (1.0 - a) + colors[1][c] as f64 * a).round() as u8)
    };
    match tex {
        Texture::Checker { cell, colors } => {
            let parity = ((s / cell).floor() as i64 + (t / cell).floor() as i64).rem_euclid(2);
            colors[parity as usize]
        }
        Texture::Noise { cell, colors } => {
            let (fs, ft) = (s / cell, t / cell);
            let (i, j) = (fs.floor() as i64, ft.floor() as i64);
            let smooth = |x: f64| x * x * (3.0 - 2.0 * x);
            let (a, b) = (smooth(fs - i as f64), smooth(ft - j as f64));
            let v = |di, dj| lattice(seed, id, i + di, j + dj);
            let top = v(0, 0) * (1.0 - a) + v(1, 0) * a;
            let bottom = v(0, 1) * (1.0 - a) + v(1, 1) * a;
            mix(colors, top * (1.0 - b) + bottom * b)
        }
    }
}

impl Scene {
    pub fn new(spec: &SceneSpec) -> Self {
        Scene {
            seed: spec.seed,
            statics: spec.rectangles.clone(),
            movers: spec.movers.clone(),
        }
    }

    fn surfaces(&self, frame: usize) -> impl Iterator<Item = Surface> + '_ {
        let statics = self.statics.iter().enumerate().map(|(i, r)| Surface {
            rect: *r,
            shift: Vec3::zeros(),
            id: i as u64,
            dynamic: false,
        });
        let n = self.statics.len();
        let movers = self.movers.iter().enumerate().map(move |(i, m)| Surface {
            rect: m.rect,
            shift: Vec3::from(m.velocity) * frame as f64,
            id: (n + i) as u64,
            dynamic: true,
        });
        statics.chain(movers)
    }

    /// Nearest intersection of `origin + s·dir` (s > 0) at frame time `frame`.
    /// Ties go to the surface listed first.
    pub fn trace(&self, frame: usize, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        let mut best: Option<(f64, Surface, Vec3)> = None;
        for surf in self.surfaces(frame) {
            let a = surf.rect.normal.index();
            if dir[a] == 0.0 {
                continue;
            }
            let s = (surf.rect.offset + surf.shift[a] - origin[a]) / dir[a];
            if !(s > 0.0) || best.is_some_and(|(b, _, _)| s >= b) {
                continue;
            }
            let p = origin + dir * s;
            let (u, v) = surf.rect.normal.tangents();
            let (lu, lv) = (p[u] - surf.shift[u], p[v] - surf.shift[v]);
            if lu >= surf.rect.min[0]
                && lu <= surf.rect.max[0]
                && lv >= surf.rect.min[1]
                && lv <= surf.rect.max[1]
            {
                best = Some((s, surf, p));
            }
        }
        best.map(|(s, surf, p)| {
            let (u, v) = surf.rect.normal.tangents();
            let local = (p[u] - surf.shift[u], p[v] - surf.shift[v]);
            Hit {
                depth: s,
                point: p,
                color: texture_color(&surf.rect.texture, self.seed, surf.id, local.0, local.1),
                mover: surf.dynamic.then(|| surf.id as usize - self.statics.len()),
            }
        })
    }

    /// World displacement per frame of the surface a hit lies on.
    pub fn velocity(&self, hit: &Hit) -> Vec3 {
        hit.mover
            .map_or(Vec3::zeros(), |i| Vec3::from(self.movers[i].velocity))
    }

    /// Per-pixel nearest hits for a camera at `pose`, frame time `frame`.
    pub fn cast(&self, frame: usize, pose: &Pose, cam: &CameraIntrinsics) -> Grid<Option<Hit>> {
        Grid::from_fn(cam.width, cam.height, |x, y| {
            let ray = pixel_ray(Pixel::new(x as f64, y as f64), cam);
            self.trace(frame, &pose.translation, &(pose.rotation * ray))
        })
    }

    /// Color image of the scene; pixels without a hit are black.
    pub fn render_view(&self, frame: usize, pose: &Pose, cam: &CameraIntrinsics) -> RgbImage {
        let hits = self.cast(frame, pose, cam);
        RgbImage::from_fn(cam.width as u32, cam.height as u32, |x, y| {
            Rgb(hits[(x as usize, y as usize)].map_or([0, 0, 0], |h| h.color))
        })
    }
}

/// Exact quantities the bundle was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Camera path before jitter.
    pub clean: Trajectory,
    /// `true` where the visible surface is a mover.
    pub dynamic: Vec<BinaryMask>,
    pub scene: Scene,
}

/// Band-limited seeded perturbation of the six pose axes, RMS-normalized to
/// the requested amplitudes.
pub fn jitter_trajectory(base: &Trajectory, spec: &SceneSpec) -> Trajectory {
    let n = base.len();
    let amplitudes: Vec<f64> = spec
        .jitter
        .translation
        .iter()
        .chain(&spec.jitter.rotation)
        .copied()
        .collect();
    if amplitudes.iter().all(|&a| a == 0.0) || n < 2 {
        return base.clone();
    }
    // Stay strictly below Nyquist so every bin carries a full sinusoid.
    let hi = JITTER_BAND.1.min((n - 1) / 2).max(1);
    let lo = JITTER_BAND.0.min(hi);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6A17_7E12);
    let signals: Vec<Vec<f64>> = amplitudes
        .iter()
        .map(|&amp| {
            let phases: Vec<f64> = (lo..=hi).map(|_| rng.random::<f64>() * TAU).collect();
            let raw: Vec<f64> = (0..n)
                .map(|k| {
                    (lo..=hi)
                        .zip(&phases)
                        .map(|(f, ph)| (TAU * (f * k) as f64 / n as f64 + ph).cos())
                        .sum()
                })
                .collect();
            let rms = (raw.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
            raw.iter()
                .map(|x| if rms > 0.0 { amp * x / rms } else { 0.0 })
                .collect()
        })
        .collect();
    let poses = base
        .poses
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let dt = Vec3::new(signals[0][k], signals[1][k], signals[2][k]);
            let dr = UnitQuaternion::from_scaled_axis(Vec3::new(
                signals[3][k],
                signals[4][k],
                signals[5][k],
            ));
            Pose::new(p.rotation * dr, p.translation + dt)
        })
        .collect();
    Trajectory {
        poses,
        fps: base.fps,
    }
}

fn frame_flow(
    scene: &Scene,
    hits: &Grid<Option<Hit>>,
    next: &Pose,
    cam: &CameraIntrinsics,
) -> FlowField {
    FlowField::from_fn(cam.width, cam.height, |x, y| {
        let hit = hits[(x, y)]?;
        let moved = hit.point + scene.velocity(&hit);
        let q = project(&transform_point(&moved, next, Direction::WorldToCam), cam).ok()?;
        Some([(q.u - x as f64) as f32, (q.v - y as f64) as f32])
    })
}

/// Renders the bundle and its ground truth.
pub fn generate_scene(spec: &SceneSpec) -> Result<(Bundle, GroundTruth), SynthError> {
    spec.validate()?;
    let cam = spec.intrinsics();
    let clean = spec.base_trajectory();
    let traj = jitter_trajectory(&clean, spec);
    let scene = Scene::new(spec);
    let n = spec.n_frames;

    let frames = par::map_range(n, |t| {
        let pose = &traj.poses[t];
        let hits = scene.cast(t, pose, &cam);
        let image = RgbImage::from_fn(cam.width as u32, cam.height as u32, |x, y| {
            Rgb(hits[(x as usize, y as usize)].map_or([0, 0, 0], |h| h.color))
        });
        let depth: DepthMap = hits.map(|h| h.map_or(f32::NAN, |h| h.depth as f32));
        let mask: BinaryMask = hits.map(|h| h.is_some_and(|h| h.mover.is_some()));
        let flow = (t + 1 < n).then(|| frame_flow(&scene, &hits, &traj.poses[t + 1], &cam));
        (image, depth, mask, flow)
    });

    let mut bundle = Bundle {
        frames: Vec::with_capacity(n),
        depths: Vec::with_capacity(n),
        semantic_masks: Vec::with_capacity(n),
        flows: Vec::with_capacity(n - 1),
        cameras: traj.poses.iter().map(|p| (cam, *p)).collect(),
        fps: spec.fps,
    };
    for (image, depth, mask, flow) in frames {
        bundle.frames.push(image);
        bundle.depths.push(depth);
        bundle.semantic_masks.push(mask);
        bundle.flows.extend(flow);
    }
    let truth = GroundTruth {
        clean,
        dynamic: bundle.semantic_masks.clone(),
        scene,
    };
    Ok((bundle, truth))
}

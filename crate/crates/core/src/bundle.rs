//! Reconstruction bundles: per-frame RGB, depth, semantic masks, forward
//! flow and cameras, plus their on-disk directory layout.
//!
//! ```text
//! meta.json                 {"n_frames","width","height","fps","camera_model"}
//! cameras.json              [{"fx","fy","cx","cy","q":[w,x,y,z],"t":[x,y,z]}, ...]
//! frames/frame_%06d.png     8-bit RGB
//! depth/depth_%06d.pfm      grayscale PFM, little-endian, bottom-to-top rows
//! masks/mask_%06d.png       8-bit gray, >= 128 means dynamic
//! flow/flow_%06d.flo        Middlebury flow t -> t+1 (N-1 files)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowField;
use crate::geometry::{
    pixel_ray, transform_point, CameraIntrinsics, CameraModel, Direction, Pixel, Pose, Vec3,
};
use crate::grid::{BinaryMask, DepthMap, Grid};
use crate::par;
use crate::pfm::{decode_pfm, encode_pfm, CodecError};
use crate::smoothing::Trajectory;

/// Quaternions read from disk may deviate from unit norm by this much; they
/// are renormalized on load.
pub const LOAD_QUATERNION_TOL: f64 = 1e-6;

/// Mask pixels at or above this gray level are dynamic.
pub const MASK_THRESHOLD: u8 = 128;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{what} {index} has size {found:?}, expected {expected:?}")]
    DimensionMismatch {
        what: &'static str,
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("corrupt {format} header in {path}: {detail}")]
    CorruptHeader {
        format: &'static str,
        path: PathBuf,
        detail: String,
    },
    #[error("camera {index}: quaternion norm {norm} is not 1")]
    NonUnitQuaternion { index: usize, norm: f64 },
    #[error("camera {index}: {detail}")]
    InvalidCamera { index: usize, detail: String },
    #[error("a bundle needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("expected {expected} {what}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("depth {index} at ({x}, {y}) is {value}; finite depths must be positive")]
    InvalidDepth {
        index: usize,
        x: usize,
        y: usize,
        value: f32,
    },
    #[error("fps must be positive and finite, got {0}")]
    InvalidFps(f64),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl BundleError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            BundleError::MissingFile(path.to_path_buf())
        } else {
            BundleError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    fn codec(path: &Path, e: CodecError) -> Self {
        match e {
            CodecError::CorruptHeader { format, detail } => BundleError::CorruptHeader {
                format,
                path: path.to_path_buf(),
                detail,
            },
            CodecError::Truncated {
                format,
                expected,
                found,
            } => BundleError::CorruptHeader {
                format,
                path: path.to_path_buf(),
                detail: format!("payload truncated: expected {expected} bytes, found {found}"),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub frames: Vec<RgbImage>,
    pub depths: Vec<DepthMap>,
    /// `true` = dynamic.
    pub semantic_masks: Vec<BinaryMask>,
    /// Forward flow `t -> t+1`; one fewer than frames.
    pub flows: Vec<FlowField>,
    pub cameras: Vec<(CameraIntrinsics, Pose)>,
    pub fps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    n_frames: usize,
    width: usize,
    height: usize,
    fps: f64,
    camera_model: CameraModel,
}

/// One pose (and optionally intrinsics) as stored in `cameras.json` and
/// `trajectory.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy: Option<f64>,
    pub q: [f64; 4],
    pub t: [f64; 3],
}

impl CameraRecord {
    pub fn from_pose(pose: &Pose) -> Self {
        CameraRecord {
            fx: None,
            fy: None,
            cx: None,
            cy: None,
            q: pose.wxyz(),
            t: pose.t_array(),
        }
    }

    fn from_camera(cam: &CameraIntrinsics, pose: &Pose) -> Self {
        CameraRecord {
            fx: Some(cam.fx),
            fy: Some(cam.fy),
            cx: Some(cam.cx),
            cy: Some(cam.cy),
            ..Self::from_pose(pose)
        }
    }

    pub fn pose(&self, index: usize) -> Result<Pose, BundleError> {
        let norm = self.q.iter().map(|c| c * c).sum::<f64>().sqrt();
        Pose::from_wxyz(self.q, self.t, LOAD_QUATERNION_TOL)
            .map_err(|_| BundleError::NonUnitQuaternion { index, norm })
    }
}

impl Bundle {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// `(width, height)` shared by every per-frame raster.
    pub fn dims(&self) -> (usize, usize) {
        self.frames
            .first()
            .map(|f| (f.width() as usize, f.height() as usize))
            .unwrap_or((0, 0))
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            poses: self.cameras.iter().map(|(_, p)| *p).collect(),
            fps: self.fps,
        }
    }

    pub fn camera_model(&self) -> Option<CameraModel> {
        self.cameras.first().map(|(c, _)| c.model)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), BundleError> {
        let n = self.frames.len();
        if n < 2 {
            return Err(BundleError::TooFewFrames(n));
        }
        let len_check = |what: &'static str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(BundleError::LengthMismatch {
                    what,
                    expected,
                    found,
                })
            }
        };
        len_check("depth maps", n, self.depths.len())?;
        len_check("semantic masks", n, self.semantic_masks.len())?;
        len_check("cameras", n, self.cameras.len())?;
        len_check("flow fields", n - 1, self.flows.len())?;
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(BundleError::InvalidFps(self.fps));
        }

        let expected = self.dims();
        let dim_check = |what: &'static str, index: usize, found: (usize, usize)| {
            if found == expected {
                Ok(())
            } else {
                Err(BundleError::DimensionMismatch {
                    what,
                    index,
                    expected,
                    found,
                })
            }
        };
        let model = self.cameras[0].0.model;
        for t in 0..n {
            let f = &self.frames[t];
            dim_check("frame", t, (f.width() as usize, f.height() as usize))?;
            dim_check("depth map", t, self.depths[t].dims())?;
            dim_check("semantic mask", t, self.semantic_masks[t].dims())?;
            if t + 1 < n {
                dim_check("flow field", t, self.flows[t].dims())?;
            }
            let (cam, pose) = &self.cameras[t];
            dim_check("camera", t, (cam.width, cam.height))?;
            if cam.model != model {
                return Err(BundleError::InvalidCamera {
                    index: t,
                    detail: format!("model {:?} differs from {:?}", cam.model, model),
                });
            }
            cam.validate().map_err(|e| BundleError::InvalidCamera {
                index: t,
                detail: e.to_string(),
            })?;
            let norm = pose.rotation.quaternion().norm();
            if (norm - 1.0).abs() > crate::geometry::UNIT_QUATERNION_TOL {
                return Err(BundleError::NonUnitQuaternion { index: t, norm });
            }
            let (w, _) = expected;
            if let Some((i, &value)) = self.depths[t]
                .iter()
                .enumerate()
                .find(|(_, d)| d.is_finite() && **d <= 0.0)
            {
                return Err(BundleError::InvalidDepth {
                    index: t,
                    x: i % w,
                    y: i / w,
                    value,
                });
            }
        }
        Ok(())
    }
}

pub fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("frames").join(format!("frame_{t:06}.png"))
}

pub fn depth_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("depth").join(format!("depth_{t:06}.pfm"))
}

pub fn mask_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("masks").join(format!("mask_{t:06}.png"))
}

pub fn flow_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("flow").join(format!("flow_{t:06}.flo"))
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>, BundleError> {
    fs::read(path).map_err(|e| BundleError::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<(), BundleError> {
    fs::write(path, bytes).map_err(|e| BundleError::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<(), BundleError> {
    fs::create_dir_all(path).map_err(|e| BundleError::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BundleError> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| BundleError::CorruptHeader {
        format: "JSON",
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn image_error(path: &Path, e: image::ImageError) -> BundleError {
    match e {
        image::ImageError::IoError(io) => BundleError::io(path, io),
        other => BundleError::CorruptHeader {
            format: "PNG",
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage, BundleError> {
    let bytes = read(path)?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map(|img| img.to_rgb8())
        .map_err(|e| image_error(path, e))
}

pub fn read_mask_png(path: &Path) -> Result<BinaryMask, BundleError> {
    let bytes = read(path)?;
    let gray = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| image_error(path, e))?
        .to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = gray.as_raw().iter().map(|&g| g >= MASK_THRESHOLD).collect();
    Ok(Grid::from_vec(w, h, data).expect("luma buffer is w*h"))
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<(), BundleError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<(), BundleError> {
    let (w, h) = mask.dims();
    let raw = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(w as u32, h as u32, raw).expect("mask buffer is w*h");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

pub fn read_flo(path: &Path) -> Result<FlowField, BundleError> {
    FlowField::from_flo(&read(path)?).map_err(|e| BundleError::codec(path, e))
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<(), BundleError> {
    write(path, &flow.to_flo())
}

pub fn read_pfm(path: &Path) -> Result<DepthMap, BundleError> {
    decode_pfm(&read(path)?).map_err(|e| BundleError::codec(path, e))
}

pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<(), BundleError> {
    write(path, &encode_pfm(depth))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BundleError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write(path, text.as_bytes())
}

/// Reads and validates a bundle directory.
pub fn load_bundle(dir: &Path) -> Result<Bundle, BundleError> {
    let meta: Meta = read_json(&dir.join("meta.json"))?;
    if meta.n_frames < 2 {
        return Err(BundleError::TooFewFrames(meta.n_frames));
    }
    let records: Vec<CameraRecord> = read_json(&dir.join("cameras.json"))?;
    if records.len() != meta.n_frames {
        return Err(BundleError::LengthMismatch {
            what: "cameras",
            expected: meta.n_frames,
            found: records.len(),
        });
    }
    let cameras = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let pose = r.pose(i)?;
            let need = |v: Option<f64>, name: &str| {
                v.or(if meta.camera_model == CameraModel::Equirectangular {
                    Some(0.0)
                } else {
                    None
                })
                .ok_or_else(|| BundleError::InvalidCamera {
                    index: i,
                    detail: format!("missing {name}"),
                })
            };
            let cam = CameraIntrinsics {
                model: meta.camera_model,
                fx: need(r.fx, "fx")?,
                fy: need(r.fy, "fy")?,
                cx: need(r.cx, "cx")?,
                cy: need(r.cy, "cy")?,
                width: meta.width,
                height: meta.height,
            };
            Ok((cam, pose))
        })
        .collect::<Result<Vec<_>, BundleError>>()?;

    let n = meta.n_frames;
    let expected = (meta.width, meta.height);
    let check = |what: &'static str, index: usize, found: (usize, usize)| {
        if found == expected {
            Ok(())
        } else {
            Err(BundleError::DimensionMismatch {
                what,
                index,
                expected,
                found,
            })
        }
    };
    let per_frame = par::try_map_range(n, |t| {
        let frame = read_rgb_png(&frame_path(dir, t))?;
        check(
            "frame",
            t,
            (frame.width() as usize, frame.height() as usize),
        )?;
        let depth = read_pfm(&depth_path(dir, t))?;
        check("depth map", t, depth.dims())?;
        let mask = read_mask_png(&mask_path(dir, t))?;
        check("semantic mask", t, mask.dims())?;
        let flow = if t + 1 < n {
            let f = read_flo(&flow_path(dir, t))?;
            check("flow field", t, f.dims())?;
            Some(f)
        } else {
            None
        };
        Ok::<_, BundleError>((frame, depth, mask, flow))
    })?;

    let mut bundle = Bundle {
        frames: Vec::with_capacity(n),
        depths: Vec::with_capacity(n),
        semantic_masks: Vec::with_capacity(n),
        flows: Vec::with_capacity(n - 1),
        cameras,
        fps: meta.fps,
    };
    for (frame, depth, mask, flow) in per_frame {
        bundle.frames.push(frame);
        bundle.depths.push(depth);
        bundle.semantic_masks.push(mask);
        bundle.flows.extend(flow);
    }
    bundle.validate()?;
    Ok(bundle)
}

/// Writes `b` to `dir` in the layout described in the module docs.
pub fn save_bundle(b: &Bundle, dir: &Path) -> Result<(), BundleError> {
    b.validate()?;
    for sub in ["frames", "depth", "masks", "flow"] {
        create_dir(&dir.join(sub))?;
    }
    let (width, height) = b.dims();
    let meta = Meta {
        n_frames: b.n_frames(),
        width,
        height,
        fps: b.fps,
        camera_model: b.cameras[0].0.model,
    };
    write_json(&dir.join("meta.json"), &meta)?;
    let records: Vec<CameraRecord> = b
        .cameras
        .iter()
        .map(|(c, p)| CameraRecord::from_camera(c, p))
        .collect();
    write_json(&dir.join("cameras.json"), &records)?;

    par::try_map_range(b.n_frames(), |t| {
        write_rgb_png(&frame_path(dir, t), &b.frames[t])?;
        write_pfm(&depth_path(dir, t), &b.depths[t])?;
        write_mask_png(&mask_path(dir, t), &b.semantic_masks[t])?;
        if let Some(flow) = b.flows.get(t) {
            write_flo(&flow_path(dir, t), flow)?;
        }
        Ok::<_, BundleError>(())
    })?;
    Ok(())
}

/// World-space point map of frame `t`; `None` where depth is invalid.
pub fn pointmap_of_frame(b: &Bundle, t: usize) -> Grid<Option<Vec3>> {
    let (cam, pose) = &b.cameras[t];
    let depth = &b.depths[t];
    Grid::from_fn(depth.width(), depth.height(), |x, y| {
        let d = depth[(x, y)];
        if !(d.is_finite() && d > 0.0) {
            return None;
        }
        let p_cam = pixel_ray(Pixel::new(x as f64, y as f64), cam) * d as f64;
        Some(transform_point(&p_cam, pose, Direction::CamToWorld))
    })
}

//! Layout of a stabilization output directory.
//!
//! ```text
//! stabilized/frame_%06d.png        full-frame output
//! coverage/cov_%06d.png            255 rendered, 128 filled from wider windows,
//!                                  64 interpolated, 0 empty
//! stabilized_flow/flow_%06d.flo    flow between consecutive output frames
//! trajectory.json                  {"fps","render_model","raw":[..],"smoothed":[..]}
//! masks_combined/mask_%06d.png     combined dynamic masks (diagnostics only)
//! fill.json                        per-frame hole-fill counts (diagnostics only)
//! report.json                      written by evaluation
//! ```

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::bundle::{
    create_dir, read, read_flo, read_json, read_rgb_png, write_flo, write_json, write_mask_png,
    write_rgb_png, BundleError, CameraRecord,
};
use crate::flow::FlowField;
use crate::geometry::CameraModel;
use crate::grid::{BinaryMask, Grid};
use crate::metrics::MetricReport;
use crate::par;
use crate::pipeline::StabilizeOutput;
use crate::smoothing::Trajectory;

pub const COVERAGE_RENDERED: u8 = 255;
pub const COVERAGE_TEMPORAL: u8 = 128;
pub const COVERAGE_SPATIAL: u8 = 64;

pub fn stabilized_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("stabilized").join(format!("frame_{t:06}.png"))
}

pub fn coverage_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("coverage").join(format!("cov_{t:06}.png"))
}

pub fn stabilized_flow_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("stabilized_flow").join(format!("flow_{t:06}.flo"))
}

pub fn combined_mask_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("masks_combined").join(format!("mask_{t:06}.png"))
}

pub fn matches_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("matches").join(format!("matches_{t:06}.csv"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub fps: f64,
    pub render_model: CameraModel,
    pub raw: Vec<CameraRecord>,
    pub smoothed: Vec<CameraRecord>,
}

impl TrajectoryFile {
    pub fn new(raw: &Trajectory, smoothed: &Trajectory, render_model: CameraModel) -> Self {
        let records = |t: &Trajectory| t.poses.iter().map(CameraRecord::from_pose).collect();
        TrajectoryFile {
            fps: smoothed.fps,
            render_model,
            raw: records(raw),
            smoothed: records(smoothed),
        }
    }

    fn decode(records: &[CameraRecord], fps: f64) -> Result<Trajectory, BundleError> {
        let poses = records
            .iter()
            .enumerate()
            .map(|(i, r)| r.pose(i))
            .collect::<Result<_, _>>()?;
        Ok(Trajectory { poses, fps })
    }

    pub fn raw(&self) -> Result<Trajectory, BundleError> {
        Self::decode(&self.raw, self.fps)
    }

    pub fn smoothed(&self) -> Result<Trajectory, BundleError> {
        Self::decode(&self.smoothed, self.fps)
    }
}

#[derive(Debug, Serialize)]
struct FillRecord {
    frame: usize,
    initial_holes: usize,
    temporal: usize,
    spatial: usize,
}

fn coverage_image(out: &StabilizeOutput, content: &BinaryMask, t: usize) -> GrayImage {
    let rendered = &out.raw_coverage[t];
    let temporal = &out.temporal_fill[t];
    let (w, h) = rendered.dims();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Luma([if rendered[(x, y)] {
            COVERAGE_RENDERED
        } else if temporal[(x, y)] {
            COVERAGE_TEMPORAL
        } else if content[(x, y)] {
            COVERAGE_SPATIAL
        } else {
            0
        }])
    })
}

/// Writes every output artifact of a stabilization run into `dir`.
pub fn write_output(
    out: &StabilizeOutput,
    dir: &Path,
    diagnostics: bool,
) -> Result<(), BundleError> {
    let mut subdirs = vec!["stabilized", "coverage", "stabilized_flow"];
    if diagnostics {
        subdirs.push("masks_combined");
    }
    for sub in subdirs {
        create_dir(&dir.join(sub))?;
    }
    write_json(
        &dir.join("trajectory.json"),
        &TrajectoryFile::new(&out.raw, &out.smoothed, out.render_model),
    )?;
    let content = out.coverage();
    par::try_map_range(out.frames.len(), |t| {
        write_rgb_png(&stabilized_path(dir, t), &out.frames[t])?;
        let cov = coverage_path(dir, t);
        coverage_image(out, &content[t], t)
            .save_with_format(&cov, image::ImageFormat::Png)
            .map_err(|e| BundleError::CorruptHeader {
                format: "PNG",
                path: cov.clone(),
                detail: e.to_string(),
            })?;
        if let Some(flow) = out.flows.get(t) {
            write_flo(&stabilized_flow_path(dir, t), flow)?;
        }
        if diagnostics {
            write_mask_png(&combined_mask_path(dir, t), &out.masks[t])?;
        }
        Ok::<_, BundleError>(())
    })?;
    if diagnostics {
        let records: Vec<FillRecord> = out
            .fill_stats
            .iter()
            .enumerate()
            .map(|(frame, s)| FillRecord {
                frame,
                initial_holes: s.initial_holes,
                temporal: s.temporal,
                spatial: s.spatial,
            })
            .collect();
        write_json(&dir.join("fill.json"), &records)?;
    }
    Ok(())
}

/// Number of consecutive files `path(dir, 0)`, `path(dir, 1)`, ... present.
pub fn count_sequence(dir: &Path, path: fn(&Path, usize) -> PathBuf) -> usize {
    (0..).take_while(|&t| path(dir, t).is_file()).count()
}

pub fn read_frames(
    dir: &Path,
    path: fn(&Path, usize) -> PathBuf,
) -> Result<Vec<RgbImage>, BundleError> {
    let n = count_sequence(dir, path);
    par::try_map_range(n, |t| read_rgb_png(&path(dir, t)))
}

pub fn read_flows(
    dir: &Path,
    path: fn(&Path, usize) -> PathBuf,
    n: usize,
) -> Result<Vec<FlowField>, BundleError> {
    par::try_map_range(n, |t| read_flo(&path(dir, t)))
}

/// Coverage maps; any nonzero value counts as content.
pub fn read_coverage(dir: &Path, n: usize) -> Result<Vec<BinaryMask>, BundleError> {
    par::try_map_range(n, |t| {
        let path = coverage_path(dir, t);
        let gray = image::load_from_memory_with_format(&read(&path)?, image::ImageFormat::Png)
            .map_err(|e| BundleError::CorruptHeader {
                format: "PNG",
                path: path.clone(),
                detail: e.to_string(),
            })?
            .to_luma8();
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        Ok(Grid::from_vec(w, h, gray.as_raw().iter().map(|&v| v > 0).collect()).expect("w*h"))
    })
}

pub fn read_trajectory_file(path: &Path) -> Result<TrajectoryFile, BundleError> {
    read_json(path)
}

pub fn write_report(path: &Path, report: &MetricReport) -> Result<(), BundleError> {
    write_json(path, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{stabilize, StabilizeConfig};
    use crate::synth::{generate_scene, SceneSpec};

    #[test]
    fn write_then_read_back() {
        let spec = SceneSpec::room(2, 6, 24, 16, CameraModel::Perspective);
        let (b, _) = generate_scene(&spec).unwrap();
        let out = stabilize(&b, &StabilizeConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_output(&out, dir.path(), true).unwrap();

        assert_eq!(
            read_frames(dir.path(), stabilized_path).unwrap(),
            out.frames
        );
        assert_eq!(
            read_flows(dir.path(), stabilized_flow_path, 5).unwrap(),
            out.flows
        );
        let cov = read_coverage(dir.path(), 6).unwrap();
        assert!(cov.iter().all(|c| c.count_true() == 24 * 16));
        let traj = read_trajectory_file(&dir.path().join("trajectory.json")).unwrap();
        assert_eq!(traj.smoothed().unwrap().poses, out.smoothed.poses);
        assert_eq!(traj.raw().unwrap().poses, out.raw.poses);
        assert!(combined_mask_path(dir.path(), 5).is_file());
        assert!(dir.path().join("fill.json").is_file());
    }
}

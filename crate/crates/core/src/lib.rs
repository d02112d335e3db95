//! Geometric core of a reconstruct-smooth-render video stabilizer.
//!
//! The crate consumes *reconstruction bundles* (per-frame RGB, depth,
//! semantic dynamic masks, forward optical flow and cameras), smooths the
//! camera trajectory with a normalized Gaussian filter, separates dynamic
//! pixels with a hybrid semantic/geometric mask, re-renders every frame from
//! a global-local point cloud along the smoothed path and fills the remaining
//! holes so the output is full-frame. An evaluation suite (cropping,
//! stability, epipolar Sampson error, warping error) and a synthetic scene
//! generator with analytic ground truth are included.
//!
//! Data-parallel loops go through rayon when the `parallel` feature is
//! enabled (the default) and fall back to plain iterators otherwise. Results
//! are identical either way.

pub mod bundle;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod mask;
pub mod metrics;
pub mod output;
mod par;
pub mod pfm;
pub mod pipeline;
pub mod render;
pub mod smoothing;
pub mod synth;

pub use bundle::{load_bundle, pointmap_of_frame, save_bundle, Bundle, BundleError};
pub use flow::FlowField;
pub use geometry::{
    project, relative_pose, transform_point, unproject, CameraIntrinsics, CameraModel, Direction,
    GeometryError, Pixel, Pose,
};
pub use grid::{BinaryMask, DepthMap, Grid};
pub use image::RgbImage;
pub use mask::{combine_masks, flow_residual_mask, rigid_flow, MaskError, MaskParams};
pub use metrics::{MetricError, MetricReport};
pub use pipeline::{stabilize, StabilizeConfig, StabilizeOutput};
pub use render::{
    build_point_set, fill_holes, render, CompositePointSet, RenderParams, RenderResult,
};
pub use smoothing::{smooth_trajectory, SmoothingError, SmoothingParams, Trajectory};
pub use synth::{corpus, generate_scene, GroundTruth, SceneSpec};

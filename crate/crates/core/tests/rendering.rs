//! Point-set construction, re-rendering and hole filling on generated scenes.

use nalgebra::UnitQuaternion;
use rayon::ThreadPoolBuilder;

use stab_core::geometry::Vec3;
use stab_core::mask::{hybrid_masks, MaskParams};
use stab_core::{
    build_point_set, fill_holes, generate_scene, project, render, stabilize, transform_point,
    BinaryMask, CameraIntrinsics, CameraModel, Direction, Pose, RenderParams, SceneSpec,
    StabilizeConfig, Trajectory,
};

fn jittered(seed: u64, n: usize, model: CameraModel) -> SceneSpec {
    let mut spec = SceneSpec::room(seed, n, 64, 48, model).with_mover();
    spec.jitter.translation = [0.02, 0.015, 0.01];
    spec.jitter.rotation = [0.004, 0.004, 0.002];
    spec
}

#[test]
fn point_set_counts_match_masks_and_depth() {
    let (b, _) = generate_scene(&jittered(5, 5, CameraModel::Perspective)).unwrap();
    let masks = hybrid_masks(&b, &MaskParams::default(), 1).unwrap();
    let p = RenderParams {
        window_n: 2,
        ..RenderParams::default()
    };
    let valid = |t: usize, x: usize, y: usize| {
        let d = b.depths[t][(x, y)];
        d.is_finite() && d > 0.0
    };
    let (w, h) = b.dims();
    for t in 0..5 {
        let ps = build_point_set(&b, &masks, t, &p);
        let lo = t.saturating_sub(2);
        let hi = (t + 2).min(4);
        let mut expected_static = 0;
        for j in lo..=hi {
            for y in 0..h {
                for x in 0..w {
                    expected_static += (!masks[j][(x, y)] && valid(j, x, y)) as usize;
                }
            }
        }
        let mut expected_dynamic = 0;
        for y in 0..h {
            for x in 0..w {
                expected_dynamic += (masks[t][(x, y)] && valid(t, x, y)) as usize;
            }
        }
        assert_eq!(ps.static_points.len(), expected_static, "frame {t}");
        assert_eq!(ps.dynamic_points.len(), expected_dynamic, "frame {t}");
        assert!(ps.dynamic_points.iter().all(|q| q.source_frame == t as u32));
        assert!(ps
            .static_points
            .iter()
            .all(|q| (lo..=hi).contains(&(q.source_frame as usize))));
    }
}

#[test]
fn own_points_at_own_pose_reproduce_single_splat_pixels() {
    for model in [
        CameraModel::Perspective,
        CameraModel::FisheyeEquidistant,
        CameraModel::Equirectangular,
    ] {
        let (b, _) = generate_scene(&jittered(9, 4, model)).unwrap();
        let masks = vec![BinaryMask::filled(64, 48, false); 4];
        let p = RenderParams {
            window_n: 0,
            splat_radius: 0,
            ..RenderParams::default()
        };
        for t in 0..4 {
            let (cam, pose) = b.cameras[t];
            let ps = build_point_set(&b, &masks, t, &p);
            let out = render(&ps, &pose, &cam, &p);
            // Independent count of how many points land on each pixel.
            let mut count = vec![0u32; 64 * 48];
            for q in ps.iter() {
                let x_cam = transform_point(&q.position, &pose, Direction::WorldToCam);
                let Ok(px) = project(&x_cam, &cam) else {
                    continue;
                };
                let (u, v) = (px.u.round() as i64, px.v.round() as i64);
                if (0..64).contains(&u) && (0..48).contains(&v) {
                    count[v as usize * 64 + u as usize] += 1;
                }
            }
            let mut single = 0;
            for (i, &c) in count.iter().enumerate() {
                if c != 1 {
                    continue;
                }
                let (x, y) = ((i % 64) as u32, (i / 64) as u32);
                assert_eq!(
                    out.image.get_pixel(x, y),
                    b.frames[t].get_pixel(x, y),
                    "{model:?} frame {t} pixel ({x},{y})"
                );
                single += 1;
            }
            // The top equirectangular row is one point: the pole.
            let rows = if model == CameraModel::Equirectangular {
                47
            } else {
                48
            };
            assert!(
                single * 100 > 99 * 64 * rows,
                "{model:?}: {single} single-splat pixels"
            );
        }
    }
}

/// A yawing camera re-rendered with a further sideways turn exposes a border
/// strip only wider windows have seen.
#[test]
fn wider_windows_fill_panning_disocclusions_faithfully() {
    let mut spec = SceneSpec::room(21, 24, 96, 72, CameraModel::Perspective);
    spec.base_path.velocity = [0.0; 3];
    spec.base_path.yaw_rate = 0.03;
    let (b, gt) = generate_scene(&spec).unwrap();
    let cam = spec.intrinsics();
    let masks = vec![BinaryMask::filled(96, 72, false); 24];
    // Single-pixel splats, so colors measure the fill rather than footprints.
    let p = RenderParams {
        window_n: 1,
        splat_radius: 0,
        ..RenderParams::default()
    };
    let turn = UnitQuaternion::from_axis_angle(&Vec3::y_axis(), 0.125);
    let views = Trajectory {
        poses: b
            .cameras
            .iter()
            .map(|(_, pose)| Pose::new(pose.rotation * turn, pose.translation))
            .collect(),
        fps: b.fps,
    };
    let cams = vec![cam; 24];
    let seq: Vec<_> = (0..24)
        .map(|t| {
            render(
                &build_point_set(&b, &masks, t, &p),
                &views.poses[t],
                &cam,
                &p,
            )
        })
        .collect();
    let filled = fill_holes(&seq, &b, &masks, &views, &cams, &p);

    let (mut holes, mut temporal, mut err_sum, mut err_n) = (0usize, 0usize, 0u64, 0u64);
    for t in 6..18 {
        let f = &filled[t];
        holes += f.stats.initial_holes;
        temporal += f.stats.temporal;
        let truth = gt.scene.render_view(t, &views.poses[t], &cam);
        for (x, y, px) in f.image.enumerate_pixels() {
            if f.temporal_mask[(x as usize, y as usize)] {
                let gt_px = truth.get_pixel(x, y);
                for c in 0..3 {
                    err_sum += (px.0[c] as i32 - gt_px.0[c] as i32).unsigned_abs() as u64;
                    err_n += 1;
                }
            }
        }
    }
    let border = 96 * 72 / 11;
    assert!(holes / 12 > border, "only {holes} holes over 12 frames");
    assert!(
        temporal * 10 >= holes * 7,
        "temporal pass resolved {temporal} of {holes}"
    );
    let mean = err_sum as f64 / err_n as f64;
    assert!(mean < 10.0, "mean abs error {mean} on 0..255");
}

#[test]
fn thread_count_does_not_change_output() {
    let (b, _) = generate_scene(&jittered(4, 10, CameraModel::Perspective)).unwrap();
    let cfg = StabilizeConfig::default();
    let run = |threads: usize| {
        ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| stabilize(&b, &cfg).unwrap())
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one.frames, many.frames);
    assert_eq!(one.flows, many.flows);
    assert_eq!(one.smoothed.poses, many.smoothed.poses);
    assert_eq!(one.fill_stats, many.fill_stats);
}

#[test]
fn render_model_override_changes_intrinsics_only() {
    let (b, _) = generate_scene(&jittered(3, 6, CameraModel::Perspective)).unwrap();
    let cfg = StabilizeConfig {
        render_model: Some(CameraModel::FisheyeEquidistant),
        ..StabilizeConfig::default()
    };
    let out = stabilize(&b, &cfg).unwrap();
    assert_eq!(out.render_model, CameraModel::FisheyeEquidistant);
    let expected: Vec<CameraIntrinsics> = b
        .cameras
        .iter()
        .map(|(c, _)| c.with_model(CameraModel::FisheyeEquidistant))
        .collect();
    assert_eq!(out.render_cams, expected);
    let hole = RenderParams::default().hole_color;
    assert!(out.frames.iter().all(|f| f.pixels().all(|px| px.0 != hole)));
}

mod common;

use std::path::Path;

use common::{exit_code, path_str, read_report, run_ok, synth_spec, tree_digest};
use stab_core::metrics::warping_error;
use stab_core::output::read_trajectory_file;
use stab_core::smoothing::{smooth_trajectory, SmoothingParams};
use stab_core::{load_bundle, CameraModel, SceneSpec};

fn small_spec(seed: u64) -> SceneSpec {
    let mut spec = SceneSpec::room(seed, 20, 48, 36, CameraModel::Perspective).with_mover();
    spec.jitter = SceneSpec::default_jittered().jitter;
    spec
}

fn stabilize_into(bundle: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["stabilize", path_str(bundle), "--out", path_str(out)];
    args.extend_from_slice(extra);
    run_ok(&args);
}

#[test]
fn synth_writes_a_loadable_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_spec(dir.path(), "scene", &small_spec(1));
    let b = load_bundle(&bundle).unwrap();
    assert_eq!(b.n_frames(), 20);
    assert_eq!(b.dims(), (48, 36));
}

#[test]
fn synth_rejects_bad_specs_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("truncated", "{\"seed\": 1, \"n_frames\": ".to_string()),
        ("unknown_key", {
            let mut v = serde_json::to_value(small_spec(1)).unwrap();
            v["colour"] = serde_json::json!("red");
            v.to_string()
        }),
        ("one_frame", {
            let mut spec = small_spec(1);
            spec.n_frames = 1;
            serde_json::to_string(&spec).unwrap()
        }),
    ];
    for (name, text) in cases {
        let path = dir.path().join(format!("{name}.json"));
        std::fs::write(&path, text).unwrap();
        let (code, stderr) = exit_code(&["synth", path_str(&path)]);
        assert_eq!(code, 2, "{name}: {stderr}");
        assert_eq!(stderr.trim_end().lines().count(), 1, "{name}: {stderr}");
        assert!(stderr.starts_with("stab: error kind=invalid_spec code=2: "));
    }
    let (code, _) = exit_code(&["synth", path_str(&dir.path().join("missing.json"))]);
    assert_eq!(code, 2);
}

#[test]
fn repeated_seed_gives_identical_bundle_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth_spec(dir.path(), "a", &small_spec(4));
    let b = synth_spec(dir.path(), "b", &small_spec(4));
    assert_eq!(tree_digest(&a), tree_digest(&b));
    let c = synth_spec(dir.path(), "c", &small_spec(5));
    assert_ne!(tree_digest(&a), tree_digest(&c));
}

#[test]
fn single_frame_bundle_is_rejected_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(2);
    spec.n_frames = 2;
    let bundle = synth_spec(dir.path(), "pair", &spec);
    // Hand-trim the pair down to its first frame.
    let meta_path = bundle.join("meta.json");
    let mut meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&meta_path).unwrap()).unwrap();
    meta["n_frames"] = 1.into();
    std::fs::write(&meta_path, meta.to_string()).unwrap();
    let cams_path = bundle.join("cameras.json");
    let mut cams: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(&cams_path).unwrap()).unwrap();
    cams.truncate(1);
    std::fs::write(&cams_path, serde_json::to_vec(&cams).unwrap()).unwrap();
    for file in [
        "frames/frame_000001.png",
        "depth/depth_000001.pfm",
        "masks/mask_000001.png",
        "flow/flow_000000.flo",
    ] {
        std::fs::remove_file(bundle.join(file)).unwrap();
    }
    let out = dir.path().join("out");
    let (code, stderr) = exit_code(&["stabilize", path_str(&bundle), "--out", path_str(&out)]);
    assert_eq!(code, 3, "{stderr}");
    assert!(stderr.contains("kind=invalid_bundle"), "{stderr}");
}

#[test]
fn stabilize_writes_one_full_frame_per_input() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_spec(dir.path(), "scene", &small_spec(3));
    let out = dir.path().join("scene-stabilized");
    // Default output location sits next to the bundle.
    run_ok(&["stabilize", path_str(&bundle)]);
    let frames = stab_core::output::read_frames(&out, stab_core::output::stabilized_path).unwrap();
    assert_eq!(frames.len(), 20);
    assert!(frames
        .iter()
        .all(|f| f.pixels().all(|p| p.0 != [255, 0, 255])));
    assert_eq!(
        stab_core::output::count_sequence(&out, stab_core::output::coverage_path),
        20
    );
    assert_eq!(
        stab_core::output::count_sequence(&out, stab_core::output::stabilized_flow_path),
        19
    );
    let traj = read_trajectory_file(&out.join("trajectory.json")).unwrap();
    assert_eq!(traj.raw.len(), 20);
    assert_eq!(traj.smoothed.len(), 20);
    assert!(!out.join("fill.json").exists());
}

#[test]
fn self_evaluation_reports_the_bundle_itself() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_spec(dir.path(), "scene", &small_spec(6));
    run_ok(&["evaluate", path_str(&bundle), path_str(&bundle)]);
    let report = read_report(&bundle.join("report.json"));
    let b = load_bundle(&bundle).unwrap();
    let intrinsic = warping_error(&b.frames, &b.flows).unwrap().we_x1e3;
    assert_eq!(report["cropping"].as_f64(), Some(1.0));
    assert_eq!(report["we_x1e3"].as_f64(), Some(intrinsic));
    assert!(report["lpips"].is_null());
    assert_eq!(report["per_frame"].as_array().unwrap().len(), 20);
}

#[test]
fn smoothed_output_is_more_stable_than_input() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_spec(dir.path(), "scene", &small_spec(7));
    let out = dir.path().join("out");
    stabilize_into(&bundle, &out, &[]);
    run_ok(&["evaluate", path_str(&bundle), path_str(&out)]);
    run_ok(&["evaluate", path_str(&bundle), path_str(&bundle)]);
    let smoothed = read_report(&out.join("report.json"))["stability"]
        .as_f64()
        .unwrap();
    let raw = read_report(&bundle.join("report.json"))["stability"]
        .as_f64()
        .unwrap();
    assert!(smoothed > raw, "{smoothed} vs {raw}");
    let cropping = read_report(&out.join("report.json"))["cropping"].as_f64();
    assert_eq!(cropping, Some(1.0));
}

#[test]
fn evaluate_rejects_mismatched_lengths_with_code_five() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_spec(dir.path(), "scene", &small_spec(8));
    let out = dir.path().join("out");
    stabilize_into(&bundle, &out, &[]);
    std::fs::remove_file(stab_core::output::stabilized_path(&out, 19)).unwrap();
    let (code, stderr) = exit_code(&["evaluate", path_str(&bundle), path_str(&out)]);
    assert_eq!(code, 5, "{stderr}");
    assert!(stderr.contains("kind=length_mismatch"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_spec(dir.path(), "scene", &small_spec(9));
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"sigma": 2.0, "emit_diagnostics": true}"#).unwrap();
    let out = dir.path().join("out");
    stabilize_into(
        &bundle,
        &out,
        &["--config", path_str(&config), "--sigma", "5"],
    );
    let raw = load_bundle(&bundle).unwrap().trajectory();
    let expected = smooth_trajectory(&raw, &SmoothingParams::new(5.0)).unwrap();
    let written = read_trajectory_file(&out.join("trajectory.json"))
        .unwrap()
        .smoothed()
        .unwrap();
    assert_eq!(written.poses, expected.poses);
    // Values absent from the flags still come from the file.
    assert!(out.join("fill.json").is_file());
    assert!(out.join("masks_combined").is_dir());
}

#[test]
fn bad_configuration_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_spec(dir.path(), "scene", &small_spec(10));
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"sigma": 3.0, "window": 2}"#).unwrap();
    let b = path_str(&bundle);
    for args in [
        vec!["stabilize", b, "--config", path_str(&config)],
        vec!["stabilize", b, "--sigma", "-1"],
        vec!["stabilize", b, "--render-model", "orthographic"],
        vec!["stabilize", b, "--no-such-flag"],
        vec!["frobnicate"],
    ] {
        let (code, stderr) = exit_code(&args);
        assert_eq!(code, 64, "{args:?}: {stderr}");
        assert_eq!(stderr.trim_end().lines().count(), 1, "{args:?}: {stderr}");
        assert!(stderr.starts_with("stab: error kind=usage code=64: "));
    }
    let out = common::stab()
        .args(["stabilize", b])
        .env("STAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn missing_bundle_is_an_invalid_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr) = exit_code(&[
        "stabilize",
        path_str(&dir.path().join("nowhere")),
        "--out",
        path_str(&dir.path().join("out")),
    ]);
    assert_eq!(code, 3, "{stderr}");
}

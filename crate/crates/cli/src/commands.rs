//! The three subcommands.

use std::path::{Path, PathBuf};

use stab_core::bundle::{flow_path, frame_path, load_bundle, save_bundle};
use stab_core::geometry::{CameraIntrinsics, Pixel};
use stab_core::grid::BinaryMask;
use stab_core::metrics::{Correspondence, MetricReport};
use stab_core::output::{
    count_sequence, coverage_path, matches_path, read_coverage, read_flows, read_frames,
    read_trajectory_file, stabilized_flow_path, stabilized_path, write_output, write_report,
};
use stab_core::pipeline::{evaluate, stabilize, EseSource, EvaluationInput, StabilizeConfig};
use stab_core::synth::{generate_scene, SceneSpec};

use crate::error::{CliError, ExitCode};

fn length_mismatch(what: &str, expected: usize, found: usize) -> CliError {
    CliError::new(
        ExitCode::LengthMismatch,
        format!("{what}: expected {expected}, found {found}"),
    )
}

pub fn synth(spec_path: &Path, out: &Path) -> Result<usize, CliError> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| {
        CliError::new(
            ExitCode::InvalidSpec,
            format!("cannot read {}: {e}", spec_path.display()),
        )
    })?;
    let spec = SceneSpec::from_json(&text)?;
    let (bundle, _) = generate_scene(&spec)?;
    save_bundle(&bundle, out).map_err(|e| CliError::new(ExitCode::Io, e.to_string()))?;
    Ok(bundle.n_frames())
}

pub fn stabilize_cmd(
    bundle_dir: &Path,
    out: &Path,
    cfg: &StabilizeConfig,
) -> Result<usize, CliError> {
    let bundle = load_bundle(bundle_dir)?;
    let result = stabilize(&bundle, cfg)?;
    write_output(&result, out, cfg.emit_diagnostics)
        .map_err(|e| CliError::new(ExitCode::Io, e.to_string()))?;
    Ok(result.frames.len())
}

/// Reads `u1,v1,u2,v2` rows; a non-numeric first row is taken as a header.
pub fn read_matches(path: &Path) -> Result<Vec<Correspondence>, CliError> {
    let bad = |detail: String| {
        CliError::new(
            ExitCode::InvalidBundle,
            format!("{}: {detail}", path.display()),
        )
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let values: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match values {
            Ok(v) if v.len() == 4 => out.push((Pixel::new(v[0], v[1]), Pixel::new(v[2], v[3]))),
            Err(_) if row == 0 => continue,
            _ => return Err(bad(format!("row {} is not u1,v1,u2,v2", row + 1))),
        }
    }
    Ok(out)
}

/// Scores the sequence in `out` against `bundle_dir` and writes
/// `out/report.json`.
///
/// Frames come from `out/stabilized/` (or `out/frames/` for a bundle
/// layout); the trajectory from `out/trajectory.json` (or the bundle's
/// cameras); flow from `out/stabilized_flow/` (or `out/flow/`, or the
/// bundle); coverage from `out/coverage/` (or full coverage); matches from
/// `out/matches/` when present.
pub fn evaluate_cmd(bundle_dir: &Path, out: &Path, seed: u64) -> Result<MetricReport, CliError> {
    let bundle = load_bundle(bundle_dir)?;
    let n = bundle.n_frames();
    let io = |e: stab_core::BundleError| CliError::new(ExitCode::Io, e.to_string());

    let frame_source: fn(&Path, usize) -> PathBuf = if stabilized_path(out, 0).is_file() {
        stabilized_path
    } else {
        frame_path
    };
    let frames = read_frames(out, frame_source).map_err(io)?;
    if frames.len() != n {
        return Err(length_mismatch("output frames", n, frames.len()));
    }

    let traj_file = out.join("trajectory.json");
    let (trajectory, model) = if traj_file.is_file() {
        let file = read_trajectory_file(&traj_file)?;
        (file.smoothed()?, Some(file.render_model))
    } else {
        (bundle.trajectory(), None)
    };
    if trajectory.len() != n {
        return Err(length_mismatch("trajectory poses", n, trajectory.len()));
    }
    let cams: Vec<CameraIntrinsics> = bundle
        .cameras
        .iter()
        .map(|(c, _)| model.map_or(*c, |m| c.with_model(m)))
        .collect();

    let flows = [
        stabilized_flow_path as fn(&Path, usize) -> PathBuf,
        flow_path,
    ]
    .into_iter()
    .find(|p| p(out, 0).is_file())
    .map(|p| {
        let found = count_sequence(out, p);
        if found != n - 1 {
            return Err(length_mismatch("flow fields", n - 1, found));
        }
        read_flows(out, p, n - 1).map_err(io)
    })
    .transpose()?
    .unwrap_or_else(|| bundle.flows.clone());

    let coverage: Vec<BinaryMask> = if coverage_path(out, 0).is_file() {
        let found = count_sequence(out, coverage_path);
        if found != n {
            return Err(length_mismatch("coverage maps", n, found));
        }
        read_coverage(out, n).map_err(io)?
    } else {
        let (w, h) = bundle.dims();
        vec![BinaryMask::filled(w, h, true); n]
    };

    let matches = if matches_path(out, 0).is_file() {
        let found = count_sequence(out, matches_path);
        if found != n - 1 {
            return Err(length_mismatch("match files", n - 1, found));
        }
        Some(
            (0..n - 1)
                .map(|t| read_matches(&matches_path(out, t)))
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };

    let input = EvaluationInput {
        frames: &frames,
        coverage: &coverage,
        trajectory: &trajectory,
        cams: &cams,
        flows: &flows,
        ese: matches
            .as_deref()
            .map_or(EseSource::Poses(&trajectory), EseSource::Matches),
        seed,
    };
    let report = evaluate(&input)?;
    write_report(&out.join("report.json"), &report).map_err(io)?;
    Ok(report)
}

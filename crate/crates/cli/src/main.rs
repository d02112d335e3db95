//! `stab`: synthesize bundles, stabilize them and score the results.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid scene spec, 3 invalid
//! bundle, 4 degenerate rotation average, 5 sequence length problem,
//! 64 usage or configuration error. Errors go to stderr as a single line.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand};
use stab_core::geometry::CameraModel;
use stab_core::synth::corpus;

use crate::config::RunConfig;
use crate::error::{CliError, ExitCode};

#[derive(Debug, Parser)]
#[command(
    name = "stab",
    version,
    about = "Reconstruct-smooth-render video stabilization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic bundle from a scene spec (JSON).
    Synth {
        spec: PathBuf,
        /// Output bundle directory [default: the spec path without extension].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print one of the built-in test scenes as a JSON scene spec.
    SceneSpec {
        #[arg(value_parser = ["default", "mover", "fisheye", "equirect"], default_value = "default")]
        preset: String,
    },
    /// Stabilize a bundle into a full-frame image sequence.
    Stabilize {
        bundle: PathBuf,
        /// Output directory [default: `<bundle>-stabilized`].
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON file with any of the flag values below; flags win.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Gaussian bandwidth in frames [default: 8].
        #[arg(long)]
        sigma: Option<f64>,
        /// Temporal radius in frames [default: ceil(3 sigma)].
        #[arg(long)]
        radius: Option<usize>,
        /// Flow residual threshold in pixels [default: 2].
        #[arg(long)]
        tau: Option<f64>,
        /// Static aggregation half-width in frames [default: 3].
        #[arg(long = "window")]
        window_n: Option<usize>,
        /// Splat half-size in pixels [default: 1].
        #[arg(long)]
        splat_radius: Option<usize>,
        /// Output projection: perspective, fisheye or equirectangular
        /// [default: the bundle's].
        #[arg(long)]
        render_model: Option<CameraModel>,
        /// Seed for match-based evaluation [default: 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Dilate combined dynamic masks by one pixel [default: on].
        #[arg(long, action = ArgAction::SetTrue, overrides_with = "no_mask_dilate")]
        mask_dilate: bool,
        #[arg(long, action = ArgAction::SetTrue, overrides_with = "mask_dilate")]
        no_mask_dilate: bool,
        /// Also write combined masks and hole-fill counts.
        #[arg(long)]
        emit_diagnostics: bool,
    },
    /// Score a sequence against its bundle and write `report.json`.
    Evaluate {
        bundle: PathBuf,
        out: PathBuf,
        /// Seed for the consensus loop when match files are present.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn default_bundle_out(spec: &Path) -> PathBuf {
    spec.with_extension("")
}

fn default_stabilize_out(bundle: &Path) -> PathBuf {
    let mut name = bundle.file_name().unwrap_or_default().to_os_string();
    name.push("-stabilized");
    bundle.with_file_name(name)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("STAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            CliError::new(
                ExitCode::Usage,
                format!("STAB_THREADS must be a positive integer, got {value:?}"),
            )
        })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::new(ExitCode::Usage, e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Synth { spec, out } => {
            let out = out.unwrap_or_else(|| default_bundle_out(&spec));
            let n = commands::synth(&spec, &out)?;
            println!("wrote {n} frames to {}", out.display());
        }
        Command::SceneSpec { preset } => {
            let spec = corpus()
                .into_iter()
                .find(|(name, _)| *name == preset)
                .map(|(_, spec)| spec)
                .expect("clap restricts presets to corpus names");
            println!(
                "{}",
                serde_json::to_string_pretty(&spec).expect("serializable")
            );
        }
        Command::Stabilize {
            bundle,
            out,
            config,
            sigma,
            radius,
            tau,
            window_n,
            splat_radius,
            render_model,
            seed,
            mask_dilate,
            no_mask_dilate,
            emit_diagnostics,
        } => {
            let file = config
                .as_deref()
                .map(RunConfig::from_file)
                .transpose()?
                .unwrap_or_default();
            let flags = RunConfig {
                sigma,
                radius,
                tau,
                window_n,
                splat_radius,
                render_model,
                seed,
                mask_dilate: match (mask_dilate, no_mask_dilate) {
                    (true, _) => Some(true),
                    (_, true) => Some(false),
                    _ => None,
                },
                emit_diagnostics: emit_diagnostics.then_some(true),
            };
            let cfg = file.overlay(flags).resolve()?;
            let out = out.unwrap_or_else(|| default_stabilize_out(&bundle));
            let n = commands::stabilize_cmd(&bundle, &out, &cfg)?;
            println!("wrote {n} stabilized frames to {}", out.display());
        }
        Command::Evaluate { bundle, out, seed } => {
            let r = commands::evaluate_cmd(&bundle, &out, seed)?;
            println!(
                "cropping={:.6} stability={:.6} ese_px2={:.6} we_x1e3={:.6}",
                r.cropping, r.stability, r.ese_px2, r.we_x1e3
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            eprintln!("{}", CliError::new(ExitCode::Usage, first));
            std::process::exit(ExitCode::Usage as i32);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.code as i32);
    }
}

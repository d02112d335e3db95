//! Run configuration: defaults, then an optional JSON config file, then
//! command-line flags.

use std::path::Path;

use serde::Deserialize;
use stab_core::geometry::CameraModel;
use stab_core::pipeline::StabilizeConfig;

use crate::error::{CliError, ExitCode};

/// Keys accepted in a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sigma: Option<f64>,
    pub radius: Option<usize>,
    pub tau: Option<f64>,
    pub window_n: Option<usize>,
    pub splat_radius: Option<usize>,
    pub render_model: Option<CameraModel>,
    pub seed: Option<u64>,
    pub mask_dilate: Option<bool>,
    pub emit_diagnostics: Option<bool>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::new(
                ExitCode::Usage,
                format!("cannot read config {}: {e}", path.display()),
            )
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::new(
                ExitCode::Usage,
                format!("invalid config {}: {e}", path.display()),
            )
        })
    }

    /// Values set in `over` win.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        RunConfig {
            sigma: over.sigma.or(self.sigma),
            radius: over.radius.or(self.radius),
            tau: over.tau.or(self.tau),
            window_n: over.window_n.or(self.window_n),
            splat_radius: over.splat_radius.or(self.splat_radius),
            render_model: over.render_model.or(self.render_model),
            seed: over.seed.or(self.seed),
            mask_dilate: over.mask_dilate.or(self.mask_dilate),
            emit_diagnostics: over.emit_diagnostics.or(self.emit_diagnostics),
        }
    }

    pub fn resolve(&self) -> Result<StabilizeConfig, CliError> {
        let d = StabilizeConfig::default();
        let cfg = StabilizeConfig {
            sigma: self.sigma.unwrap_or(d.sigma),
            radius: self.radius.or(d.radius),
            tau: self.tau.unwrap_or(d.tau),
            window_n: self.window_n.unwrap_or(d.window_n),
            splat_radius: self.splat_radius.unwrap_or(d.splat_radius),
            render_model: self.render_model.or(d.render_model),
            seed: self.seed.unwrap_or(d.seed),
            mask_dilate: self.mask_dilate.unwrap_or(d.mask_dilate),
            emit_diagnostics: self.emit_diagnostics.unwrap_or(d.emit_diagnostics),
        };
        cfg.validate()
            .map_err(|e| CliError::new(ExitCode::Usage, e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file: RunConfig =
            serde_json::from_str(r#"{"sigma": 4.0, "tau": 3.0, "mask_dilate": false}"#).unwrap();
        let flags = RunConfig {
            sigma: Some(12.0),
            ..RunConfig::default()
        };
        let cfg = file.overlay(flags).resolve().unwrap();
        assert_eq!(cfg.sigma, 12.0);
        assert_eq!(cfg.tau, 3.0);
        assert!(!cfg.mask_dilate);
        assert_eq!(cfg.window_n, 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sigma": 4.0, "bandwidth": 2}"#).is_err());
    }

    #[test]
    fn render_model_parses() {
        let c: RunConfig = serde_json::from_str(r#"{"render_model": "fisheye"}"#).unwrap();
        assert_eq!(c.render_model, Some(CameraModel::FisheyeEquidistant));
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        let c = RunConfig {
            tau: Some(0.0),
            ..RunConfig::default()
        };
        assert_eq!(c.resolve().unwrap_err().code, ExitCode::Usage);
    }
}

//! Exit codes and one-line error reporting.

use std::fmt;

use stab_core::bundle::BundleError;
use stab_core::metrics::MetricError;
use stab_core::pipeline::PipelineError;
use stab_core::smoothing::SmoothingError;
use stab_core::synth::SynthError;

/// Process exit codes. These values are part of the command-line contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Io = 1,
    InvalidSpec = 2,
    InvalidBundle = 3,
    DegenerateRotation = 4,
    LengthMismatch = 5,
    Usage = 64,
}

impl ExitCode {
    fn kind(self) -> &'static str {
        match self {
            ExitCode::Io => "io",
            ExitCode::InvalidSpec => "invalid_spec",
            ExitCode::InvalidBundle => "invalid_bundle",
            ExitCode::DegenerateRotation => "degenerate_rotation",
            ExitCode::LengthMismatch => "length_mismatch",
            ExitCode::Usage => "usage",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ExitCode, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    /// `stab: error kind=<kind> code=<n>: <message>` on a single line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat: String = self
            .message
            .chars()
            .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        write!(
            f,
            "stab: error kind={} code={}: {}",
            self.code.kind(),
            self.code as i32,
            flat
        )
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::new(ExitCode::InvalidSpec, e.to_string())
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        CliError::new(ExitCode::InvalidBundle, e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Bundle(_) => ExitCode::InvalidBundle,
            PipelineError::Smoothing(SmoothingError::DegenerateRotation { .. }) => {
                ExitCode::DegenerateRotation
            }
            PipelineError::Metric(MetricError::LengthMismatch { .. }) => ExitCode::LengthMismatch,
            _ => ExitCode::Usage,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        let code = match e {
            MetricError::LengthMismatch { .. } => ExitCode::LengthMismatch,
            MetricError::TooShort { .. } | MetricError::Empty => ExitCode::LengthMismatch,
            _ => ExitCode::InvalidBundle,
        };
        CliError::new(code, e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_is_single_line() {
        let e = CliError::new(ExitCode::InvalidBundle, "bad\nthing");
        assert_eq!(
            e.to_string(),
            "stab: error kind=invalid_bundle code=3: bad thing"
        );
    }

    #[test]
    fn degenerate_rotation_maps_to_four() {
        let e: CliError =
            PipelineError::Smoothing(SmoothingError::DegenerateRotation { frame: 3 }).into();
        assert_eq!(e.code, ExitCode::DegenerateRotation);
    }
}

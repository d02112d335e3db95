//! Stability score: share of low-frequency energy in the camera's
//! frame-to-frame motion.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::MetricError;
use crate::smoothing::Trajectory;

pub const MIN_STABILITY_FRAMES: usize = 16;

/// Frequency bins counted as low-frequency: the five lowest after DC.
pub const LOW_BAND: std::ops::RangeInclusive<usize> = 1..=5;

/// Profiles with less total non-DC energy than this score 1.
pub const ZERO_ENERGY: f64 = 1e-12;

/// Per-step translation magnitudes `‖t[k+1] − t[k]‖`.
pub fn translation_profile(traj: &Trajectory) -> Vec<f64> {
    traj.poses
        .windows(2)
        .map(|w| (w[1].translation - w[0].translation).norm())
        .collect()
}

/// Per-step rotation angles in radians.
pub fn rotation_profile(traj: &Trajectory) -> Vec<f64> {
    traj.poses
        .windows(2)
        .map(|w| {
            let rel = (w[0].rotation.inverse() * w[1].rotation).into_inner();
            2.0 * rel.imag().norm().atan2(rel.w.abs())
        })
        .collect()
}

/// Low-band energy over total non-DC energy, up to the Nyquist bin.
pub fn spectral_score(profile: &[f64]) -> f64 {
    band_energy_ratio(profile, LOW_BAND)
}

/// Energy in `band` over total non-DC energy up to the Nyquist bin; 1 when
/// the total is below [`ZERO_ENERGY`].
pub fn band_energy_ratio(profile: &[f64], band: std::ops::RangeInclusive<usize>) -> f64 {
    let n = profile.len();
    let mut buf: Vec<Complex<f64>> = profile.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let energy = |f: usize| buf[f].norm_sqr();
    let total: f64 = (1..=n / 2).map(energy).sum();
    if total < ZERO_ENERGY {
        return 1.0;
    }
    let low: f64 = band.filter(|&f| f <= n / 2).map(energy).sum();
    (low / total).clamp(0.0, 1.0)
}

/// Mean of the translation and rotation spectral scores.
pub fn stability_score(traj: &Trajectory) -> Result<f64, MetricError> {
    if traj.len() < MIN_STABILITY_FRAMES {
        return Err(MetricError::TooShort {
            len: traj.len(),
            min: MIN_STABILITY_FRAMES,
        });
    }
    let t = spectral_score(&translation_profile(traj));
    let r = spectral_score(&rotation_profile(traj));
    Ok(0.5 * (t + r))
}

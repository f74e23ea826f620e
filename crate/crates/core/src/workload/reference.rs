use super::profile::LoadProfile;
use crate::sensor::AnalogSource;

/// Current ranges the reference meter switches between, amperes full scale.
pub const REFERENCE_RANGES: [f64; 4] = [1e-3, 10e-3, 100e-3, 1.0];

/// High-rate bench meter serving as ground truth.
///
/// Each reading integrates the signal over its full aperture, so the
/// apertures tile the window and the energy sum telescopes to the exact
/// integral of the profile; only individual readings are quantized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceMeter {
    pub samples_per_second: f64,
    pub bits: u32,
}

impl Default for ReferenceMeter {
    fn default() -> Self {
        ReferenceMeter { samples_per_second: 500_000.0, bits: 18 }
    }
}

impl ReferenceMeter {
    pub fn aperture(&self) -> f64 {
        1.0 / self.samples_per_second
    }

    /// Quantizes `current` on the smallest range that holds it.
    pub fn quantize_current(&self, current: f64) -> f64 {
        let range = REFERENCE_RANGES
            .iter()
            .copied()
            .find(|r| current.abs() <= *r)
            .unwrap_or(REFERENCE_RANGES[REFERENCE_RANGES.len() - 1]);
        let lsb = 2.0 * range / f64::from(1u32 << self.bits);
        ((current / lsb).round() * lsb).clamp(-range, range)
    }

    /// One reading starting at `t` seconds.
    pub fn sample_at(&self, profile: &LoadProfile, t: f64) -> f64 {
        let avg = profile.window_average(t, t + self.aperture());
        self.quantize_current(avg.current)
    }

    /// Readings covering `[t0, t1)`.
    pub fn currents(&self, profile: &LoadProfile, t0: f64, t1: f64) -> Vec<f64> {
        let n = ((t1 - t0) * self.samples_per_second).floor().max(0.0) as usize;
        (0..n).map(|k| self.sample_at(profile, t0 + k as f64 * self.aperture())).collect()
    }

    /// Joules over each trigger window, summed.
    pub fn energy(&self, profile: &LoadProfile, windows: &[(f64, f64)]) -> f64 {
        windows.iter().map(|&(a, b)| profile.exact_energy(a, b)).sum()
    }
}

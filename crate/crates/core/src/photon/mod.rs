//! Pulsed single-photon emission of the pigtailed source and the
//! correlation estimators: saturation, g²(0), HOM visibility,
//! indistinguishability and long-term stability.

mod analysis;
mod histogram;
mod simulate;
mod tags;

pub use analysis::{
    corrected_rate_mhz, fibered_brightness, fit_saturation, indistinguishability, photon_metrics, saturation_curve, stability_series,
    stability_stats, Corrected, Interferometer, PhotonMetrics, SaturationFit, StabilityStats,
};
pub use histogram::{g2_zero, histogram_coincidences, hom_visibility, peak_areas, CoincidenceHistogram, PeakAreas};
pub use simulate::{poisson_tags, simulate_stream, Light, StreamConfig, StreamReport};
pub use tags::{read_time_tags, read_time_tags_csv, write_time_tags, write_time_tags_csv, TimeTags, TIME_TAGS_MAGIC};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhotonError {
    #[error("invalid source parameters: {0}")]
    InvalidParams(String),
    #[error("channel {0} has no time tags")]
    EmptyChannel(usize),
    #[error("need at least {needed} side peaks, window holds {found}")]
    InsufficientSidePeaks { found: usize, needed: usize },
    #[error("histogram is {found:?}, expected {expected:?}")]
    WrongKind { found: ExperimentKind, expected: ExperimentKind },
    #[error("bin width {bin_ps} ps exceeds window {window_ps} ps")]
    BinWiderThanWindow { bin_ps: u64, window_ps: u64 },
    #[error("histograms differ in {0} and cannot be merged")]
    Incompatible(&'static str),
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { found: usize, needed: usize },
    #[error("saturation fit did not converge: {0}")]
    NonConvergence(String),
    #[error("invalid interferometer: {0}")]
    InvalidInterferometer(String),
}

/// Which correlation experiment a stream or histogram belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Balanced splitter and two detectors (intensity correlation).
    Hbt,
    /// Unbalanced Mach-Zehnder with a one-period delay and two detectors.
    Hom,
}

impl ExperimentKind {
    pub fn code(self) -> u16 {
        match self {
            ExperimentKind::Hbt => 0,
            ExperimentKind::Hom => 1,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            0 => Some(ExperimentKind::Hbt),
            1 => Some(ExperimentKind::Hom),
            _ => None,
        }
    }
}

/// Single-photon detector model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub efficiency: f64,
    /// Timing jitter (ps, 1σ).
    pub jitter_ps: f64,
    pub dead_time_ps: f64,
    pub dark_rate_hz: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams { efficiency: 0.9, jitter_ps: 30.0, dead_time_ps: 25_000.0, dark_rate_hz: 100.0 }
    }
}

/// Rate at full saturation (MHz) that the default chain efficiency reproduces.
pub const SATURATED_RATE_MHZ: f64 = 17.60;
/// Single-photon rate at the default operating power (MHz).
pub const OPERATING_RATE_MHZ: f64 = 16.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub rep_rate_mhz: f64,
    /// Probability that the quantum dot is prepared by a saturating pulse.
    pub occupation_probability: f64,
    /// Probability that an emitted photon reaches the fiber output.
    pub chain_efficiency: f64,
    /// Target g²(0); sets the rate of independent noise photons.
    pub multiphoton_prob: f64,
    /// Mean wave-packet overlap of two signal photons.
    pub intrinsic_indistinguishability: f64,
    pub decay_time_ps: f64,
    /// Power scale of the exponential saturation (arbitrary units).
    pub saturation_power: f64,
    /// Carried as metadata; the streams are unpolarized.
    pub degree_of_polarization: f64,
    pub detector: DetectorParams,
}

impl Default for SourceParams {
    fn default() -> Self {
        let rep_rate_mhz = 79.21;
        let occupation_probability = 0.70;
        SourceParams {
            rep_rate_mhz,
            occupation_probability,
            chain_efficiency: SATURATED_RATE_MHZ / (rep_rate_mhz * occupation_probability),
            multiphoton_prob: 0.013,
            intrinsic_indistinguishability: 0.975,
            decay_time_ps: 80.0,
            saturation_power: 1.0,
            degree_of_polarization: 0.95,
            detector: DetectorParams::default(),
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<(), PhotonError> {
        let bad = |m: String| Err(PhotonError::InvalidParams(m));
        if !(self.rep_rate_mhz > 0.0) || !self.rep_rate_mhz.is_finite() {
            return bad(format!("rep rate {} MHz", self.rep_rate_mhz));
        }
        for (name, p) in [
            ("occupation_probability", self.occupation_probability),
            ("chain_efficiency", self.chain_efficiency),
            ("multiphoton_prob", self.multiphoton_prob),
            ("intrinsic_indistinguishability", self.intrinsic_indistinguishability),
            ("degree_of_polarization", self.degree_of_polarization),
            ("detector efficiency", self.detector.efficiency),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.multiphoton_prob > 0.5 {
            return bad("multiphoton_prob above 0.5 is not reachable with one noise photon".into());
        }
        for (name, v) in [
            ("decay_time_ps", self.decay_time_ps),
            ("jitter_ps", self.detector.jitter_ps),
            ("dead_time_ps", self.detector.dead_time_ps),
            ("dark_rate_hz", self.detector.dark_rate_hz),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} = {v}"));
            }
        }
        if !(self.saturation_power > 0.0) {
            return bad("saturation_power must be positive".into());
        }
        Ok(())
    }

    pub fn period_ps(&self) -> f64 {
        1e6 / self.rep_rate_mhz
    }

    /// Probability per pulse that the dot emits a signal photon at `power`.
    pub fn emission_probability(&self, power: f64) -> f64 {
        self.occupation_probability * (1.0 - (-power / self.saturation_power).exp())
    }

    /// Ratio of noise to signal photons that yields `multiphoton_prob` as g²(0):
    /// the smaller root of `g(1 + r)² = 2r`.
    pub fn noise_ratio(&self) -> f64 {
        let g = self.multiphoton_prob;
        if g == 0.0 {
            return 0.0;
        }
        let b = 1.0 - g;
        (b - (b * b - g * g).sqrt()) / g
    }

    /// Power at which the signal rate equals [`OPERATING_RATE_MHZ`] with the
    /// default saturated rate.
    pub fn operating_power(&self) -> f64 {
        self.saturation_power * (SATURATED_RATE_MHZ / (SATURATED_RATE_MHZ - OPERATING_RATE_MHZ)).ln()
    }

    /// Expected rate of photons at the fiber output (MHz), signal and noise.
    pub fn expected_rate_mhz(&self, power: f64) -> f64 {
        self.rep_rate_mhz * self.emission_probability(power) * (1.0 + self.noise_ratio()) * self.chain_efficiency
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_ratio_reproduces_g2() {
        for g in [0.0, 0.013, 0.1, 0.4] {
            let p = SourceParams { multiphoton_prob: g, ..SourceParams::default() };
            let r = p.noise_ratio();
            assert!((2.0 * r / (1.0 + r).powi(2) - g).abs() < 1e-12);
        }
    }

    #[test]
    fn default_operating_point() {
        let p = SourceParams::default();
        let signal = p.rep_rate_mhz * p.emission_probability(p.operating_power()) * p.chain_efficiency;
        assert!((signal - OPERATING_RATE_MHZ).abs() < 1e-9);
        assert!(p.validate().is_ok());
    }
}

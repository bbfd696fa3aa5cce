//! Reflectivity spectra of the fiber above the chip: synthesis, fringe-based
//! gap estimation, mode-dip contrast extraction and lateral centering.

mod dips;
mod fringes;
mod io;
mod synth;

pub use dips::{contrast_profile, estimate_center, find_mode_dips, CenterEstimate, ContrastProfile, DipFeature};
pub use fringes::{
    estimate_gap, estimate_gap_by_fit, find_maxima, gap_from_pair, measure_gap, FringePair, GapEstimate, GapMethod,
};
pub use io::{read_spectrum_csv, write_spectrum_csv};
pub use synth::{synth_reflectivity, synth_reflectivity_with_rng, ContrastModel, Probe};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::OpticsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("band [{min_nm}, {max_nm}] nm outside [850, 1000] nm or empty")]
    OutOfBand { min_nm: f64, max_nm: f64 },
    #[error("gap must be positive, got {0} µm")]
    InvalidGap(f64),
    #[error("only {found} fringe maxima in band; gap too small for the band (near contact)")]
    TooFewFringes { found: usize },
    #[error("scan has {points} points, at least 5 are required")]
    InsufficientScan { points: usize },
    #[error("fundamental contrast has no interior maximum in the scan window")]
    NoInteriorMaximum,
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divided by the reflectivity with fiber and chip in contact.
    #[default]
    ContactNormalized,
    Raw,
}

/// Reflectivity versus wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// nm, strictly increasing
    pub wavelengths: Vec<f64>,
    pub reflectivity: Vec<f64>,
    pub normalization: Normalization,
}

impl Spectrum {
    pub fn new(wavelengths: Vec<f64>, reflectivity: Vec<f64>, normalization: Normalization) -> Result<Self, SpectraError> {
        let s = Spectrum { wavelengths, reflectivity, normalization };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SpectraError> {
        if self.wavelengths.len() != self.reflectivity.len() {
            return Err(SpectraError::InvalidSpectrum("wavelength and reflectivity lengths differ".into()));
        }
        if self.wavelengths.len() < 3 {
            return Err(SpectraError::InvalidSpectrum("fewer than 3 points".into()));
        }
        if self.wavelengths.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SpectraError::InvalidSpectrum("wavelengths not strictly increasing".into()));
        }
        if self.reflectivity.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(SpectraError::InvalidSpectrum("reflectivity must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    /// Mean sample spacing (nm).
    pub fn resolution(&self) -> f64 {
        let n = self.wavelengths.len();
        (self.wavelengths[n - 1] - self.wavelengths[0]) / (n - 1) as f64
    }
}

/// Wavelength sampling of a synthesized spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub min_nm: f64,
    pub max_nm: f64,
    pub step_nm: f64,
}

impl Default for Band {
    /// 850-1000 nm at 0.02 nm: wide enough to hold two fringe maxima at the
    /// stamp gap, fine enough to resolve a Q ≈ 13000 linewidth.
    fn default() -> Self {
        Band { min_nm: 850.0, max_nm: 1000.0, step_nm: 0.02 }
    }
}

impl Band {
    pub fn validate(&self) -> Result<(), SpectraError> {
        let ok = self.min_nm >= crate::optics::MIN_WAVELENGTH_NM - 1e-9
            && self.max_nm <= crate::optics::MAX_WAVELENGTH_NM + 1e-9
            && self.max_nm > self.min_nm
            && self.step_nm > 0.0
            && (self.max_nm - self.min_nm) / self.step_nm >= 2.0;
        if ok {
            Ok(())
        } else {
            Err(SpectraError::OutOfBand { min_nm: self.min_nm, max_nm: self.max_nm })
        }
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        let n = ((self.max_nm - self.min_nm) / self.step_nm + 1e-6).floor() as usize + 1;
        (0..n).map(|i| self.min_nm + i as f64 * self.step_nm).collect()
    }
}

/// Tunables of the spectral estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectraConfig {
    /// Savitzky-Golay window (samples, odd) applied before maxima search.
    pub smoothing_window: usize,
    /// Minimum prominence of a fringe maximum, as a fraction of the peak-to-peak range.
    pub min_prominence: f64,
    /// Running-median window (nm) used to mask mode dips before fringe analysis.
    pub mask_window_nm: f64,
    /// Half-width of the search window around each expected mode wavelength (nm).
    pub dip_window_nm: f64,
    /// Fitted contrasts below this are reported as "no dip found".
    pub dip_threshold: f64,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        SpectraConfig {
            smoothing_window: 11,
            min_prominence: 0.05,
            mask_window_nm: 0.6,
            dip_window_nm: 0.5,
            dip_threshold: 0.05,
        }
    }
}

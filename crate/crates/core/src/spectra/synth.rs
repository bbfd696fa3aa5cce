use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Band, Normalization, SpectraError, Spectrum};
use crate::device::DeviceSpec;
use crate::optics::{CouplingEngine, CouplingLandscape, PillarSpectrum};

/// Optical configuration seen by the spectrometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// µm
    pub gap_um: f64,
    /// Fiber axis minus pillar axis (µm).
    pub offset_um: (f64, f64),
    /// Blue shift of every pillar mode relative to its room-temperature value (nm).
    pub wavelength_shift_nm: f64,
}

impl Probe {
    pub fn new(gap_um: f64, offset_um: (f64, f64)) -> Self {
        Probe { gap_um, offset_um, wavelength_shift_nm: 0.0 }
    }
}

type Landscapes = Arc<(Vec<CouplingLandscape>, f64)>;

/// Offset- and gap-dependent dip contrast of every pillar mode.
///
/// Mode `i` has contrast `C_max,i · η_i(offset, gap) / η_0(0, gap)`, where
/// `η_i` is the fiber coupling of mode `i` summed over its degenerate partners.
/// Landscapes are cached per gap.
#[derive(Debug)]
pub struct ContrastModel {
    device: DeviceSpec,
    engine: CouplingEngine,
    families: Vec<Vec<PillarSpectrum>>,
    cache: Mutex<Vec<(u64, Landscapes)>>,
}

const CACHE_SLOTS: usize = 32;

impl ContrastModel {
    pub fn new(device: DeviceSpec) -> Result<Self, SpectraError> {
        device.validate()?;
        let engine = CouplingEngine::new(&device.fiber, device.grid, device.pillar.mode_wavelengths[0])?;
        let families = (0..device.pillar.n_transverse_modes)
            .map(|order| PillarSpectrum::family(&engine, &device.pillar, order))
            .collect::<Result<_, _>>()?;
        Ok(ContrastModel { device, engine, families, cache: Mutex::new(Vec::new()) })
    }

    pub fn device(&self) -> &DeviceSpec {
        &self.device
    }

    fn landscapes(&self, gap: f64) -> Landscapes {
        let key = gap.to_bits();
        if let Some((_, l)) = self.cache.lock().unwrap().iter().find(|(k, _)| *k == key) {
            return Arc::clone(l);
        }
        let maps: Vec<CouplingLandscape> = self.families.iter().map(|f| self.engine.landscape(f, gap)).collect();
        let peak = maps[0].at(0.0, 0.0);
        let entry = Arc::new((maps, peak));
        let mut cache = self.cache.lock().unwrap();
        if cache.len() >= CACHE_SLOTS {
            cache.remove(0);
        }
        cache.push((key, Arc::clone(&entry)));
        entry
    }

    /// Dip contrast of every mode for the given gap and lateral offset.
    pub fn contrasts(&self, gap: f64, offset: (f64, f64)) -> Result<Vec<f64>, SpectraError> {
        if !(gap > 0.0) || !gap.is_finite() {
            return Err(SpectraError::InvalidGap(gap));
        }
        let entry = self.landscapes(gap);
        let (maps, peak) = (&entry.0, entry.1);
        Ok(maps
            .iter()
            .zip(&self.device.contrast_max)
            .map(|(m, cmax)| (cmax * m.at(offset.0, offset.1) / peak).clamp(0.0, 1.0))
            .collect())
    }
}

/// Contact-normalized reflectivity of the fiber above the chip.
///
/// The background is two-beam interference between the fiber facet and the
/// chip surface, with maxima where `2·gap = m·λ`; each pillar mode multiplies
/// it by a Lorentzian dip `1 − C_i·L_i(λ)` of FWHM `λ_i/Q`. `noise` is the
/// relative standard deviation of multiplicative Gaussian noise.
pub fn synth_reflectivity(
    model: &ContrastModel,
    probe: &Probe,
    band: &Band,
    noise: f64,
    seed: u64,
) -> Result<Spectrum, SpectraError> {
    synth_reflectivity_with_rng(model, probe, band, noise, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn synth_reflectivity_with_rng<R: Rng + ?Sized>(
    model: &ContrastModel,
    probe: &Probe,
    band: &Band,
    noise: f64,
    rng: &mut R,
) -> Result<Spectrum, SpectraError> {
    band.validate()?;
    if !(noise >= 0.0) {
        return Err(SpectraError::InvalidSpectrum(format!("noise amplitude {noise}")));
    }
    let contrasts = model.contrasts(probe.gap_um, probe.offset_um)?;
    let dev = model.device();
    let (r1, r2) = (dev.facet_reflectance, dev.chip_reflectance);
    let cross = 2.0 * (r1 * r2).sqrt();
    let contact = (r1.sqrt() + r2.sqrt()).powi(2);
    let dips: Vec<(f64, f64, f64)> = dev
        .pillar
        .mode_wavelengths
        .iter()
        .zip(&contrasts)
        .map(|(l, c)| {
            let center = l - probe.wavelength_shift_nm;
            (center, center / (2.0 * dev.pillar.quality_factor), *c)
        })
        .collect();
    let wavelengths = band.wavelengths();
    let reflectivity = wavelengths
        .iter()
        .map(|&l| {
            let phase = 4.0 * PI * probe.gap_um * 1e3 / l;
            let background = (r1 + r2 + cross * phase.cos()) / contact;
            let dip: f64 = dips.iter().map(|(c, hw, depth)| depth / (1.0 + ((l - c) / hw).powi(2))).sum();
            let mut r = background * (1.0 - dip).max(0.0);
            if noise > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                r *= 1.0 + noise * z;
            }
            r.max(0.0)
        })
        .collect();
    Ok(Spectrum { wavelengths, reflectivity, normalization: Normalization::ContactNormalized })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ContrastModel {
        let dev = DeviceSpec { grid: crate::optics::Grid2D::square(24.0, 256).unwrap(), ..DeviceSpec::default() };
        ContrastModel::new(dev).unwrap()
    }

    #[test]
    fn centered_contrasts() {
        let m = model();
        let c = m.contrasts(3.0, (0.0, 0.0)).unwrap();
        assert!((c[0] - 0.9).abs() < 1e-12);
        assert!(c[1] < 1e-6);
        let off = m.contrasts(3.0, (0.8, 0.0)).unwrap();
        assert!(off[0] < c[0] && off[1] > c[1]);
    }

    #[test]
    fn rejects_bad_probe_and_band() {
        let m = model();
        let band = Band::default();
        assert!(synth_reflectivity(&m, &Probe::new(0.0, (0.0, 0.0)), &band, 0.0, 1).is_err());
        let wide = Band { min_nm: 800.0, ..band };
        assert!(matches!(
            synth_reflectivity(&m, &Probe::new(3.0, (0.0, 0.0)), &wide, 0.0, 1),
            Err(SpectraError::OutOfBand { .. })
        ));
    }

    #[test]
    fn contact_normalized_and_seeded() {
        let m = model();
        let p = Probe::new(10.0, (0.3, 0.0));
        let band = Band::default();
        let a = synth_reflectivity(&m, &p, &band, 0.01, 7).unwrap();
        let b = synth_reflectivity(&m, &p, &band, 0.01, 7).unwrap();
        assert_eq!(a, b);
        let clean = synth_reflectivity(&m, &p, &band, 0.0, 7).unwrap();
        assert!(clean.reflectivity.iter().all(|r| *r <= 1.0 + 1e-12));
    }
}

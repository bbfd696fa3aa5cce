use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Phase, RigError, RigSession, BASE_TEMPERATURE_K, ROOM_TEMPERATURE_K};
use crate::spectra::{measure_gap, Spectrum};

/// Blue shift of the pillar modes on cooling:
/// `Δλ(T) = s·(1 − exp(−(300 K − T)/T0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalModel {
    /// s (nm)
    pub shift_nm: f64,
    /// T0 (K)
    pub t0_k: f64,
}

impl Default for ThermalModel {
    fn default() -> Self {
        ThermalModel { shift_nm: 5.0, t0_k: 120.0 }
    }
}

pub fn thermal_shift_nm(temperature_k: f64, shift_nm: f64, t0_k: f64) -> f64 {
    shift_nm * (1.0 - (-(ROOM_TEMPERATURE_K - temperature_k) / t0_k).exp())
}

impl ThermalModel {
    pub fn validate(&self) -> Result<(), RigError> {
        if !(self.shift_nm >= 0.0) || !(self.t0_k > 0.0) {
            return Err(RigError::InvalidConfig("thermal model needs shift ≥ 0 and T0 > 0".into()));
        }
        Ok(())
    }

    pub fn shift_nm(&self, temperature_k: f64) -> f64 {
        thermal_shift_nm(temperature_k, self.shift_nm, self.t0_k)
    }

    /// Progress of the cooldown, 0 at room temperature and 1 at base temperature.
    pub fn fraction(&self, temperature_k: f64) -> f64 {
        let full = 1.0 - (-(ROOM_TEMPERATURE_K - BASE_TEMPERATURE_K) / self.t0_k).exp();
        (1.0 - (-(ROOM_TEMPERATURE_K - temperature_k) / self.t0_k).exp()) / full
    }
}

/// Mode wavelengths and contrasts at base temperature over repeated cycles.
/// Per-mode arrays are indexed by cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub n_cycles: usize,
    /// `[mode][cycle]`, `None` where no dip was found (nm).
    pub mode_wavelengths_nm: Vec<Vec<Option<f64>>>,
    /// `[mode][cycle]`
    pub contrasts: Vec<Vec<f64>>,
    /// Gap measured from the cold spectrum of each cycle (µm).
    pub gap_estimates_um: Vec<Option<f64>>,
    /// Sample standard deviation of the fundamental wavelength (nm).
    pub fundamental_wavelength_std_nm: f64,
    /// False with fewer than two cycles, where the std is reported as 0.
    pub std_defined: bool,
    pub second_mode_contrast_min: Option<f64>,
    pub second_mode_contrast_max: Option<f64>,
}

const COOLDOWN_DURATION_S: f64 = 8.0 * 3600.0;

impl RigSession {
    fn apply_temperature(&mut self, temperature_k: f64) {
        let model = self.config.thermal;
        let frac = model.fraction(temperature_k);
        self.state.temperature = temperature_k;
        self.state.mode_shift_nm = model.shift_nm(temperature_k) + frac * self.cycle_jitter_nm;
        self.state.gap = self.config.stamp_design_gap + (self.config.cold_gap - self.config.stamp_design_gap) * frac;
    }

    /// Ramp from room temperature to `target_k` in `n_steps`, acquiring a
    /// spectrum at every step. Lateral alignment is left untouched.
    pub fn run_cooldown(&mut self, target_k: f64, n_steps: usize) -> Result<Vec<(f64, Spectrum)>, RigError> {
        if self.state.phase != Phase::Secured {
            return Err(RigError::WrongPhase { op: "cooldown", phase: self.state.phase });
        }
        if !(BASE_TEMPERATURE_K..=ROOM_TEMPERATURE_K).contains(&target_k) {
            return Err(RigError::InvalidTemperature(target_k));
        }
        let n_steps = n_steps.max(1);
        self.cycle_jitter_nm = self.gauss(self.config.cycle_jitter);
        self.log("cooldown-start", json!({ "target_k": target_k, "steps": n_steps }));
        let mut out = Vec::with_capacity(n_steps);
        for k in 1..=n_steps {
            let t = ROOM_TEMPERATURE_K + (target_k - ROOM_TEMPERATURE_K) * k as f64 / n_steps as f64;
            self.apply_temperature(t);
            self.advance(COOLDOWN_DURATION_S / n_steps as f64);
            out.push((t, self.acquire_spectrum()?));
        }
        self.state.phase = Phase::Cold;
        self.log("cooldown-complete", json!({ "temperature_k": self.state.temperature }));
        Ok(out)
    }

    /// Return to room temperature.
    pub fn warm_up(&mut self) -> Result<&super::RigState, RigError> {
        if self.state.phase != Phase::Cold {
            return Err(RigError::WrongPhase { op: "warm-up", phase: self.state.phase });
        }
        self.cycle_jitter_nm = 0.0;
        self.apply_temperature(ROOM_TEMPERATURE_K);
        self.advance(COOLDOWN_DURATION_S);
        self.state.phase = Phase::Secured;
        self.log("warmed-up", json!({ "temperature_k": ROOM_TEMPERATURE_K }));
        Ok(&self.state)
    }

    /// `n_cycles` warm-up/cooldown cycles, measuring the modes at base temperature each time.
    pub fn thermal_cycle(&mut self, n_cycles: usize) -> Result<CycleReport, RigError> {
        if !matches!(self.state.phase, Phase::Secured | Phase::Cold) {
            return Err(RigError::WrongPhase { op: "thermal-cycle", phase: self.state.phase });
        }
        if n_cycles == 0 {
            return Err(RigError::InvalidConfig("thermal_cycle needs at least one cycle".into()));
        }
        let n_modes = self.device().pillar.n_transverse_modes;
        let mut wavelengths = vec![Vec::with_capacity(n_cycles); n_modes];
        let mut contrasts = vec![Vec::with_capacity(n_cycles); n_modes];
        let mut gaps = Vec::with_capacity(n_cycles);
        for cycle in 0..n_cycles {
            if self.state.phase == Phase::Cold {
                self.warm_up()?;
            }
            let (_, spectrum) = self.run_cooldown(BASE_TEMPERATURE_K, 1)?.pop().expect("one cooldown step");
            for dip in self.measure_dips(&spectrum) {
                wavelengths[dip.mode_order].push(dip.found.then_some(dip.center_wavelength));
                contrasts[dip.mode_order].push(dip.contrast);
            }
            gaps.push(measure_gap(&spectrum, &self.config.spectra).ok().map(|g| g.gap_um));
            self.log("cycle-complete", json!({ "cycle": cycle + 1 }));
        }
        let fund: Vec<f64> = wavelengths[0].iter().flatten().copied().collect();
        let std_defined = fund.len() >= 2;
        let std = if std_defined {
            let m = fund.iter().sum::<f64>() / fund.len() as f64;
            (fund.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (fund.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let fold = |f: fn(f64, f64) -> f64| contrasts.get(1).and_then(|c| c.iter().copied().reduce(f));
        let (second_min, second_max) = (fold(f64::min), fold(f64::max));
        Ok(CycleReport {
            n_cycles,
            mode_wavelengths_nm: wavelengths,
            contrasts,
            gap_estimates_um: gaps,
            fundamental_wavelength_std_nm: std,
            std_defined,
            second_mode_contrast_min: second_min,
            second_mode_contrast_max: second_max,
        })
    }
}

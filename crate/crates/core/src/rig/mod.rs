//! Virtual pigtailing workstation: stage, landing, securing, cooldown and
//! thermal cycling, with the automated alignment procedure on top.

mod align;
mod log;
mod thermal;

pub use align::AlignmentReport;
pub use log::{Event, EventLog};
pub use thermal::{thermal_shift_nm, CycleReport, ThermalModel};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::device::DeviceSpec;
use crate::optics::{OpticsError, PillarSpec};
use crate::spectra::{
    find_mode_dips, synth_reflectivity_with_rng, Band, ContrastModel, DipFeature, Probe, SpectraConfig, SpectraError,
    Spectrum,
};

/// Lowest temperature the cryostat reaches (K).
pub const BASE_TEMPERATURE_K: f64 = 2.4;
pub const ROOM_TEMPERATURE_K: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Free,
    Landed,
    Secured,
    Cold,
}

impl Phase {
    /// Whether a single operation may move the rig from `self` to `next`.
    pub fn can_become(self, next: Phase) -> bool {
        use Phase::*;
        self == next || matches!((self, next), (Free, Landed) | (Landed, Secured) | (Secured, Cold) | (Cold, Secured))
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::Free => "free",
            Phase::Landed => "landed",
            Phase::Secured => "secured",
            Phase::Cold => "cold",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigError {
    #[error("{axis} motion is not allowed while {phase}")]
    MotionForbidden { axis: &'static str, phase: Phase },
    #[error("{op} is not allowed while {phase}")]
    WrongPhase { op: &'static str, phase: Phase },
    #[error("invalid rig config: {0}")]
    InvalidConfig(String),
    #[error("landing aborted: estimated gap {estimated_um:.2} µm vs commanded {commanded_um:.2} µm")]
    LandingFailure { estimated_um: f64, commanded_um: f64 },
    #[error("temperature {0} K outside [2.4, 300] K")]
    InvalidTemperature(f64),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

/// Workstation behavior and noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigConfig {
    /// Gap defined by the stamp once it rests on the chip (µm).
    pub stamp_design_gap: f64,
    /// Gap at base temperature (µm).
    pub cold_gap: f64,
    /// Positioning repeatability of every stage move, per axis (µm, 1σ).
    pub stage_step_noise: f64,
    /// Relative amplitude of multiplicative spectrum noise.
    pub spectrum_noise: f64,
    /// Lateral drift of the unsecured holder (µm/h).
    pub drift_rate: f64,
    pub thermal: ThermalModel,
    /// Cycle-to-cycle scatter of the cold mode wavelengths (nm, 1σ).
    pub cycle_jitter: f64,
    /// Radius of the disk the hidden pillar position is drawn from (µm).
    pub initial_misalignment: f64,
    /// Alignment gives up beyond this distance from the start (µm).
    pub search_radius: f64,
    /// Lateral perturbation introduced by securing the holder (µm, 1σ).
    pub secure_sigma: f64,
    /// Height of the stamp above the chip at session start (µm).
    pub start_height: f64,
    /// Hidden vertical stage offset; a nonzero value simulates a stage fault (µm).
    pub stage_fault_z: f64,
    /// Spectrometer frame interval (s).
    pub spectrum_interval_s: f64,
    pub band: Band,
    pub spectra: SpectraConfig,
    /// Cross-scan half width and step (µm).
    pub scan_half_width: f64,
    pub scan_step: f64,
    pub max_align_iterations: usize,
    /// Replace the two cross-scans by a full 2D raster.
    pub full_raster: bool,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            stamp_design_gap: 3.0,
            cold_gap: 3.5,
            stage_step_noise: 0.01,
            spectrum_noise: 0.005,
            drift_rate: 0.02,
            thermal: ThermalModel::default(),
            cycle_jitter: 0.010,
            initial_misalignment: 5.0,
            search_radius: 10.0,
            secure_sigma: 0.05,
            start_height: 200.0,
            stage_fault_z: 0.0,
            spectrum_interval_s: 0.1,
            band: Band::default(),
            spectra: SpectraConfig::default(),
            scan_half_width: 3.0,
            scan_step: 0.25,
            max_align_iterations: 5,
            full_raster: false,
        }
    }
}

impl RigConfig {
    /// Every noise source switched off.
    pub fn noiseless() -> Self {
        RigConfig {
            stage_step_noise: 0.0,
            spectrum_noise: 0.0,
            drift_rate: 0.0,
            cycle_jitter: 0.0,
            secure_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RigError> {
        let bad = |m: &str| Err(RigError::InvalidConfig(m.to_string()));
        for (name, v) in [
            ("stage_step_noise", self.stage_step_noise),
            ("spectrum_noise", self.spectrum_noise),
            ("drift_rate", self.drift_rate),
            ("cycle_jitter", self.cycle_jitter),
            ("secure_sigma", self.secure_sigma),
            ("initial_misalignment", self.initial_misalignment),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(&format!("{name} must be a finite non-negative number"));
            }
        }
        if !(self.stamp_design_gap > 0.0) || !(self.cold_gap > 0.0) {
            return bad("gaps must be positive");
        }
        if !(self.start_height > 0.0) {
            return bad("start_height must be positive");
        }
        if !(self.spectrum_interval_s > 0.0) {
            return bad("spectrum_interval_s must be positive");
        }
        if !(self.scan_step > 0.0 && self.scan_half_width >= 2.0 * self.scan_step) {
            return bad("scan needs at least five points");
        }
        if !(self.search_radius > 0.0) || self.max_align_iterations == 0 {
            return bad("search_radius and max_align_iterations must be positive");
        }
        self.thermal.validate()?;
        self.band.validate()?;
        Ok(())
    }
}

/// Snapshot of the workstation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigState {
    /// Commanded stage position (µm); z is the stamp height above the chip.
    pub stage_position: [f64; 3],
    /// Hidden from the estimators.
    pub true_pillar_center: [f64; 2],
    /// Hidden difference between actual and commanded stage position (µm).
    pub stage_error: [f64; 3],
    /// µm
    pub gap: f64,
    /// K
    pub temperature: f64,
    pub phase: Phase,
    pub ferrule_locked: bool,
    /// Current blue shift of the pillar modes (nm).
    pub mode_shift_nm: f64,
    /// Simulated time since session start (s).
    pub time_s: f64,
    /// Last gap estimate made during landing (µm).
    pub landing_gap_estimate: Option<f64>,
    pub event_log: EventLog,
}

impl RigState {
    /// Fiber axis minus pillar axis (µm). Hidden from the estimators.
    pub fn true_offset(&self) -> (f64, f64) {
        (
            self.stage_position[0] + self.stage_error[0] - self.true_pillar_center[0],
            self.stage_position[1] + self.stage_error[1] - self.true_pillar_center[1],
        )
    }

    pub fn residual_offset(&self) -> f64 {
        let (x, y) = self.true_offset();
        x.hypot(y)
    }
}

/// One simulated workstation with its own random stream.
#[derive(Debug)]
pub struct RigSession {
    state: RigState,
    config: RigConfig,
    model: Arc<ContrastModel>,
    rng: ChaCha8Rng,
    drift_direction: (f64, f64),
    jitter: [f64; 2],
    cycle_jitter_nm: f64,
}

impl RigSession {
    pub fn new(device: DeviceSpec, config: RigConfig, seed: u64) -> Result<Self, RigError> {
        let model = ContrastModel::new(device)?;
        Self::with_model(Arc::new(model), config, seed)
    }

    /// Session sharing an existing contrast model (and its landscape cache).
    pub fn with_model(model: Arc<ContrastModel>, config: RigConfig, seed: u64) -> Result<Self, RigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = config.initial_misalignment * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        let center = [r * theta.cos(), r * theta.sin()];
        let mut state = RigState {
            stage_position: [0.0, 0.0, config.start_height],
            true_pillar_center: center,
            stage_error: [0.0, 0.0, config.stage_fault_z],
            gap: config.stamp_design_gap + config.start_height + config.stage_fault_z,
            temperature: ROOM_TEMPERATURE_K,
            phase: Phase::Free,
            ferrule_locked: false,
            mode_shift_nm: 0.0,
            time_s: 0.0,
            landing_gap_estimate: None,
            event_log: EventLog::default(),
        };
        state.event_log.push(0.0, "session-created", json!({ "seed": seed, "stage_position": state.stage_position }));
        Ok(RigSession { state, config, model, rng, drift_direction: (phi.cos(), phi.sin()), jitter: [0.0; 2], cycle_jitter_nm: 0.0 })
    }

    /// Session with the hidden pillar at a chosen position instead of a random one.
    pub fn with_pillar_at(model: Arc<ContrastModel>, config: RigConfig, seed: u64, center: [f64; 2]) -> Result<Self, RigError> {
        if !(center[0].is_finite() && center[1].is_finite()) {
            return Err(RigError::InvalidConfig("non-finite pillar position".into()));
        }
        let mut s = Self::with_model(model, config, seed)?;
        s.state.true_pillar_center = center;
        Ok(s)
    }

    pub fn state(&self) -> &RigState {
        &self.state
    }

    pub fn config(&self) -> &RigConfig {
        &self.config
    }

    pub fn device(&self) -> &DeviceSpec {
        self.model.device()
    }

    pub fn model(&self) -> &Arc<ContrastModel> {
        &self.model
    }

    fn log(&mut self, event: &str, payload: serde_json::Value) {
        let t = self.state.time_s;
        self.state.event_log.push(t, event, payload);
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).map(|n| n.sample(&mut self.rng)).unwrap_or(0.0)
        } else {
            0.0
        }
    }

    /// Advance simulated time; the unsecured holder drifts laterally.
    fn advance(&mut self, dt: f64) {
        self.state.time_s += dt;
        if matches!(self.state.phase, Phase::Free | Phase::Landed) && self.config.drift_rate > 0.0 {
            let d = self.config.drift_rate * dt / 3600.0;
            self.state.stage_error[0] += d * self.drift_direction.0;
            self.state.stage_error[1] += d * self.drift_direction.1;
        }
    }

    /// Relative stage move (µm). Each moved axis lands with fresh positioning
    /// noise. Lowering past contact lands the stamp at the design gap.
    pub fn move_stage(&mut self, dx: f64, dy: f64, dz: f64) -> Result<&RigState, RigError> {
        let phase = self.state.phase;
        if !(dx.is_finite() && dy.is_finite() && dz.is_finite()) {
            return Err(RigError::InvalidConfig("non-finite stage move".into()));
        }
        if (dx != 0.0 || dy != 0.0) && matches!(phase, Phase::Secured | Phase::Cold) {
            return Err(RigError::MotionForbidden { axis: "x/y", phase });
        }
        if dz != 0.0 && phase != Phase::Free {
            return Err(RigError::MotionForbidden { axis: "z", phase });
        }
        if dx == 0.0 && dy == 0.0 && dz == 0.0 {
            self.log("move", json!({ "dx": 0.0, "dy": 0.0, "dz": 0.0, "stage_position": self.state.stage_position }));
            return Ok(&self.state);
        }
        let sigma = self.config.stage_step_noise;
        for (axis, d) in [dx, dy].into_iter().enumerate() {
            if d != 0.0 {
                self.state.stage_position[axis] += d;
                // repeatability noise does not accumulate, drift does
                let jitter = self.gauss(sigma);
                self.state.stage_error[axis] += jitter - self.jitter[axis];
                self.jitter[axis] = jitter;
            }
        }
        if dz != 0.0 {
            self.state.stage_position[2] += dz;
            self.state.stage_error[2] += self.gauss(sigma);
        }
        self.advance(0.2);
        let payload = json!({ "dx": dx, "dy": dy, "dz": dz, "stage_position": self.state.stage_position });
        self.log("move", payload);
        if self.state.phase == Phase::Free {
            let z_true = self.state.stage_position[2] + self.state.stage_error[2];
            if z_true <= 0.0 {
                self.state.stage_position[2] = 0.0;
                self.state.stage_error[2] = 0.0;
                self.state.phase = Phase::Landed;
                self.state.gap = self.config.stamp_design_gap;
                self.log("landed", json!({ "gap_design_um": self.config.stamp_design_gap }));
            } else {
                self.state.gap = self.config.stamp_design_gap + z_true;
            }
        }
        Ok(&self.state)
    }

    /// Spectrometer view of the current configuration, including the hidden
    /// offset.
    pub fn probe(&self) -> Probe {
        Probe { gap_um: self.state.gap, offset_um: self.state.true_offset(), wavelength_shift_nm: self.state.mode_shift_nm }
    }

    /// One spectrometer frame at the current configuration.
    pub fn acquire_spectrum(&mut self) -> Result<Spectrum, RigError> {
        let probe = self.probe();
        let s = synth_reflectivity_with_rng(&self.model, &probe, &self.config.band, self.config.spectrum_noise, &mut self.rng)?;
        self.advance(self.config.spectrum_interval_s);
        self.log("spectrum", json!({ "points": s.len(), "temperature_k": self.state.temperature }));
        Ok(s)
    }

    /// Pillar description with mode wavelengths at the expected thermal shift
    /// for the current temperature (what the operator would search for).
    pub fn expected_pillar(&self) -> PillarSpec {
        self.expected_pillar_at(self.state.temperature)
    }

    pub fn expected_pillar_at(&self, temperature_k: f64) -> PillarSpec {
        let shift = self.config.thermal.shift_nm(temperature_k);
        let mut p = self.model.device().pillar.clone();
        p.mode_wavelengths.iter_mut().for_each(|l| *l -= shift);
        p
    }

    pub fn measure_dips(&self, s: &Spectrum) -> Vec<DipFeature> {
        find_mode_dips(s, &self.expected_pillar(), &self.config.spectra)
    }

    /// Screw the holder to the chip mount. Applies the securing perturbation
    /// and logs the fundamental contrast before and after.
    pub fn secure(&mut self) -> Result<&RigState, RigError> {
        if self.state.phase != Phase::Landed {
            return Err(RigError::WrongPhase { op: "secure", phase: self.state.phase });
        }
        let before = self.acquire_spectrum()?;
        let pre = self.measure_dips(&before)[0].contrast;
        let sigma = self.config.secure_sigma;
        let (ex, ey) = (self.gauss(sigma), self.gauss(sigma));
        self.state.stage_error[0] += ex;
        self.state.stage_error[1] += ey;
        self.state.phase = Phase::Secured;
        self.state.ferrule_locked = true;
        self.advance(60.0);
        let after = self.acquire_spectrum()?;
        let post = self.measure_dips(&after)[0].contrast;
        self.log("secured", json!({ "contrast_before": pre, "contrast_after": post }));
        Ok(&self.state)
    }
}

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Grid2D, OpticsError, ScalarField, MAX_WAVELENGTH_NM, MIN_WAVELENGTH_NM};
use super::propagate::radiated_part;
use crate::optimize::bisect_root;
use crate::special::{j0, j1, k0, k1};

/// Normalized frequency used for the pillar fundamental-mode profile.
///
/// The fundamental micropillar mode is represented by an LP01-type profile
/// (Bessel core, exponential tail) of this fixed shape, scaled so that its
/// best-fit Gaussian waist is `waist_ratio · diameter / 2`.
pub const PILLAR_PROFILE_V: f64 = 2.2;

/// Pillar waist ratio calibrated against the 2.8 µm / 3.5 µm-gap coupling of 71%.
/// Reproduced by [`super::calibrate_waist_ratio`].
pub const CALIBRATED_WAIST_RATIO: f64 = 0.68633;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FiberModeModel {
    /// Exact LP01 solution of the step-index dispersion relation.
    #[default]
    ExactLp01,
    /// Gaussian with the Marcuse-equivalent waist.
    MarcuseGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberSpec {
    pub name: String,
    pub numerical_aperture: f64,
    /// µm
    pub core_diameter: f64,
    /// Refractive index of the end facet, sets the Fresnel loss at the air gap.
    pub facet_index: f64,
    pub mode_model: FiberModeModel,
}

impl FiberSpec {
    pub fn uhna3() -> Self {
        FiberSpec {
            name: "UHNA3".into(),
            numerical_aperture: 0.35,
            core_diameter: 1.8,
            facet_index: 1.45,
            mode_model: FiberModeModel::ExactLp01,
        }
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture < 1.0) {
            return Err(OpticsError::InvalidSpec(format!("NA {} not in (0, 1)", self.numerical_aperture)));
        }
        if !(self.core_diameter > 0.0) {
            return Err(OpticsError::InvalidSpec(format!("core diameter {}", self.core_diameter)));
        }
        if !(self.facet_index >= 1.0) {
            return Err(OpticsError::InvalidSpec(format!("facet index {}", self.facet_index)));
        }
        Ok(())
    }

    pub fn v_number(&self, wavelength_nm: f64) -> f64 {
        std::f64::consts::PI * self.core_diameter * self.numerical_aperture / (wavelength_nm * 1e-3)
    }

    /// Power transmission of the facet at normal incidence.
    pub fn facet_transmission(&self) -> f64 {
        let r = (self.facet_index - 1.0) / (self.facet_index + 1.0);
        1.0 - r * r
    }

    /// Marcuse-equivalent Gaussian waist (µm).
    pub fn marcuse_waist(&self, wavelength_nm: f64) -> f64 {
        self.core_diameter / 2.0 * marcuse_ratio(self.v_number(wavelength_nm))
    }
}

fn marcuse_ratio(v: f64) -> f64 {
    0.65 + 1.619 / v.powf(1.5) + 2.879 / v.powi(6)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeParity {
    Symmetric,
    Antisymmetric,
}

/// Micropillar cavity description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PillarSpec {
    /// µm
    pub diameter: f64,
    /// nm, room temperature
    pub fundamental_wavelength: f64,
    pub quality_factor: f64,
    pub purcell_factor: f64,
    /// ps
    pub decay_time: f64,
    pub n_transverse_modes: usize,
    /// nm, strictly decreasing with mode order
    pub mode_wavelengths: Vec<f64>,
    pub mode_parities: Vec<ModeParity>,
    /// Fundamental-mode waist as a fraction of the pillar radius.
    pub waist_ratio: f64,
}

impl PillarSpec {
    /// The 2.8 µm pillar with its two lowest transverse modes at 945.8 and 943.0 nm.
    pub fn reference_device() -> Self {
        PillarSpec {
            diameter: 2.8,
            fundamental_wavelength: 945.8,
            quality_factor: 13000.0,
            purcell_factor: 13.0,
            decay_time: 80.0,
            n_transverse_modes: 2,
            mode_wavelengths: vec![945.8, 943.0],
            mode_parities: vec![ModeParity::Symmetric, ModeParity::Antisymmetric],
            waist_ratio: CALIBRATED_WAIST_RATIO,
        }
    }

    pub fn with_diameter(&self, diameter: f64) -> Self {
        PillarSpec { diameter, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.diameter > 0.0) {
            return Err(OpticsError::InvalidSpec(format!("diameter {}", self.diameter)));
        }
        if !(self.quality_factor > 0.0) {
            return Err(OpticsError::InvalidSpec("quality factor must be positive".into()));
        }
        if !(self.waist_ratio > 0.0) {
            return Err(OpticsError::InvalidSpec("waist ratio must be positive".into()));
        }
        if self.n_transverse_modes == 0
            || self.mode_wavelengths.len() != self.n_transverse_modes
            || self.mode_parities.len() != self.n_transverse_modes
        {
            return Err(OpticsError::InvalidSpec("mode tables do not match n_transverse_modes".into()));
        }
        if self.mode_wavelengths.windows(2).any(|w| w[1] >= w[0]) {
            return Err(OpticsError::InvalidSpec("mode wavelengths must strictly decrease".into()));
        }
        for (order, parity) in self.mode_parities.iter().enumerate() {
            if TransverseMode::for_order(order).parity() != *parity {
                return Err(OpticsError::InvalidSpec(format!("mode {order} parity {parity:?} unsupported")));
            }
        }
        Ok(())
    }

    /// Best-fit Gaussian waist of the fundamental mode (µm).
    pub fn waist(&self) -> f64 {
        self.waist_ratio * self.diameter / 2.0
    }

    pub fn radius(&self) -> f64 {
        self.diameter / 2.0
    }
}

/// Transverse mode family of the pillar, ordered by decreasing wavelength.
///
/// Order 0 is the LP01-like fundamental; higher orders follow the
/// Laguerre-Gauss sequence LG(0,1), LG(0,2), LG(1,0). Modes with azimuthal
/// index `l > 0` come as a degenerate cos/sin pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransverseMode {
    Fundamental,
    LaguerreGauss { radial: u32, azimuthal: u32 },
}

impl TransverseMode {
    pub const MAX_ORDER: usize = 3;

    pub fn for_order(order: usize) -> Self {
        match order {
            0 => TransverseMode::Fundamental,
            1 => TransverseMode::LaguerreGauss { radial: 0, azimuthal: 1 },
            2 => TransverseMode::LaguerreGauss { radial: 0, azimuthal: 2 },
            _ => TransverseMode::LaguerreGauss { radial: 1, azimuthal: 0 },
        }
    }

    pub fn parity(self) -> ModeParity {
        match self {
            TransverseMode::LaguerreGauss { azimuthal, .. } if azimuthal % 2 == 1 => ModeParity::Antisymmetric,
            _ => ModeParity::Symmetric,
        }
    }

    pub fn degeneracy(self) -> usize {
        match self {
            TransverseMode::LaguerreGauss { azimuthal, .. } if azimuthal > 0 => 2,
            _ => 1,
        }
    }
}

fn check_wavelength(wavelength_nm: f64) -> Result<(), OpticsError> {
    if !(MIN_WAVELENGTH_NM..=MAX_WAVELENGTH_NM).contains(&wavelength_nm) {
        return Err(OpticsError::WavelengthOutOfRange(wavelength_nm));
    }
    Ok(())
}

/// Radial LP01 profile of a step-index guide, `E(r)` with `E(0) = 1`.
#[derive(Debug, Clone, Copy)]
struct Lp01 {
    core_radius: f64,
    u: f64,
    w: f64,
    j0u: f64,
    k0w: f64,
}

impl Lp01 {
    /// Below this the Bessel tail extends over tens of core radii and no
    /// practical grid holds the mode.
    const MIN_V: f64 = 0.8;

    fn solve(v: f64, core_radius: f64) -> Result<Self, OpticsError> {
        if !v.is_finite() || v < Self::MIN_V {
            return Err(OpticsError::NoGuidedMode(v));
        }
        let first_zero = 2.404_825_557_695_773;
        let upper = v.min(first_zero) * (1.0 - 1e-12);
        let f = |u: f64| {
            let w = (v * v - u * u).sqrt();
            u * j1(u) / j0(u) - w * k1(w) / k0(w)
        };
        let u = bisect_root(f, 1e-9, upper, 1e-14).ok_or(OpticsError::NoGuidedMode(v))?;
        let w = (v * v - u * u).sqrt();
        Ok(Lp01 { core_radius, u, w, j0u: j0(u), k0w: k0(w) })
    }

    fn eval(&self, r: f64) -> f64 {
        let rho = r / self.core_radius;
        if rho < 1.0 {
            j0(self.u * rho) / self.j0u
        } else {
            k0(self.w * rho) / self.k0w
        }
    }
}

/// Fundamental fiber mode centered on the grid axis, normalized to unit power.
pub fn make_fiber_mode(fiber: &FiberSpec, grid: Grid2D, wavelength_nm: f64) -> Result<ScalarField, OpticsError> {
    make_fiber_mode_at(fiber, grid, wavelength_nm, 0.0, 0.0)
}

/// Fundamental fiber mode with its axis at `(x0, y0)` µm.
pub fn make_fiber_mode_at(
    fiber: &FiberSpec,
    grid: Grid2D,
    wavelength_nm: f64,
    x0: f64,
    y0: f64,
) -> Result<ScalarField, OpticsError> {
    fiber.validate()?;
    check_wavelength(wavelength_nm)?;
    grid.check_resolution(wavelength_nm)?;
    let v = fiber.v_number(wavelength_nm);
    let a = fiber.core_diameter / 2.0;
    let field = match fiber.mode_model {
        FiberModeModel::ExactLp01 => {
            let mode = Lp01::solve(v, a)?;
            ScalarField::from_fn(grid, wavelength_nm, |x, y| {
                Complex64::new(mode.eval((x - x0).hypot(y - y0)), 0.0)
            })
        }
        FiberModeModel::MarcuseGaussian => {
            if v < Lp01::MIN_V {
                return Err(OpticsError::NoGuidedMode(v));
            }
            let w = fiber.marcuse_waist(wavelength_nm);
            ScalarField::from_fn(grid, wavelength_nm, |x, y| {
                let r2 = (x - x0).powi(2) + (y - y0).powi(2);
                Complex64::new((-r2 / (w * w)).exp(), 0.0)
            })
        }
    };
    field.normalized()
}

/// All degenerate fields of pillar mode `order`, each normalized.
///
/// Fields are sampled at the mode's own resonance wavelength and restricted
/// to their propagating angular spectrum, i.e. the field radiated into the gap.
pub fn pillar_mode_family(pillar: &PillarSpec, order: usize, grid: Grid2D) -> Result<Vec<ScalarField>, OpticsError> {
    pillar.validate()?;
    if order >= pillar.n_transverse_modes || order > TransverseMode::MAX_ORDER {
        return Err(OpticsError::UnknownOrder { order, available: pillar.n_transverse_modes });
    }
    let wavelength_nm = pillar.mode_wavelengths[order];
    check_wavelength(wavelength_nm)?;
    grid.check_resolution(wavelength_nm)?;
    let w = pillar.waist();
    grid.check_extent(w)?;

    let fields = match TransverseMode::for_order(order) {
        TransverseMode::Fundamental => {
            let profile = Lp01::solve(PILLAR_PROFILE_V, w / marcuse_ratio(PILLAR_PROFILE_V))?;
            vec![ScalarField::from_fn(grid, wavelength_nm, |x, y| Complex64::new(profile.eval(x.hypot(y)), 0.0))]
        }
        TransverseMode::LaguerreGauss { radial, azimuthal } => {
            let l = azimuthal as i32;
            let partners = if azimuthal > 0 { 2 } else { 1 };
            (0..partners)
                .map(|k| {
                    ScalarField::from_fn(grid, wavelength_nm, |x, y| {
                        let r2 = (x * x + y * y) / (w * w);
                        let phi = y.atan2(x);
                        let angular = if k == 0 { (l as f64 * phi).cos() } else { (l as f64 * phi).sin() };
                        let radial_poly = match radial {
                            0 => 1.0,
                            _ => 1.0 - 2.0 * r2,
                        };
                        Complex64::new((2.0 * r2).sqrt().powi(l) * radial_poly * angular * (-r2).exp(), 0.0)
                    })
                })
                .collect()
        }
    };
    fields.into_iter().map(|f| radiated_part(f).normalized()).collect()
}

/// One representative field of pillar mode `order` (the cosine partner for
/// degenerate pairs).
pub fn make_pillar_mode(pillar: &PillarSpec, order: usize, grid: Grid2D) -> Result<ScalarField, OpticsError> {
    let mut family = pillar_mode_family(pillar, order, grid)?;
    Ok(family.swap_remove(0))
}

/// Second-moment mode-field diameter about the power centroid (µm).
pub fn mode_field_diameter(field: &ScalarField) -> f64 {
    let g = &field.grid;
    let (mut p, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for j in 0..g.samples_y {
        for i in 0..g.samples_x {
            let w = field.at(i, j).norm_sqr();
            p += w;
            sx += w * g.x(i);
            sy += w * g.y(j);
        }
    }
    let (cx, cy) = (sx / p, sy / p);
    let mut m2 = 0.0;
    for j in 0..g.samples_y {
        for i in 0..g.samples_x {
            m2 += field.at(i, j).norm_sqr() * ((g.x(i) - cx).powi(2) + (g.y(j) - cy).powi(2));
        }
    }
    2.0 * (2.0 * m2 / p).sqrt()
}

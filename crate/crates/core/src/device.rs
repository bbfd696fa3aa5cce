use serde::{Deserialize, Serialize};

use crate::optics::{FiberSpec, Grid2D, OpticsError, PillarSpec};

/// Everything the reflectivity model needs to know about the fiber/pillar pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub pillar: PillarSpec,
    pub fiber: FiberSpec,
    /// Dip contrast of each pillar mode under perfect centering.
    pub contrast_max: Vec<f64>,
    /// Power reflectance of the fiber end facet.
    pub facet_reflectance: f64,
    /// Effective power reflectance of the chip surface seen through the gap.
    pub chip_reflectance: f64,
    /// Grid used for the offset-dependent coupling landscapes. It must be wide
    /// enough to cover the alignment search radius.
    pub grid: Grid2D,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        DeviceSpec {
            pillar: PillarSpec::reference_device(),
            fiber: FiberSpec::uhna3(),
            contrast_max: vec![0.9, 0.6],
            facet_reflectance: 0.035,
            chip_reflectance: 0.30,
            grid: Grid2D { extent_x: 24.0, extent_y: 24.0, samples_x: 512, samples_y: 512 },
        }
    }
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<(), OpticsError> {
        self.pillar.validate()?;
        self.fiber.validate()?;
        if self.contrast_max.len() != self.pillar.n_transverse_modes {
            return Err(OpticsError::InvalidSpec("one contrast_max entry per pillar mode required".into()));
        }
        if self.contrast_max.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(OpticsError::InvalidSpec("contrast_max entries must lie in [0, 1]".into()));
        }
        for r in [self.facet_reflectance, self.chip_reflectance] {
            if !(r > 0.0 && r < 1.0) {
                return Err(OpticsError::InvalidSpec(format!("reflectance {r} not in (0, 1)")));
            }
        }
        Ok(())
    }
}

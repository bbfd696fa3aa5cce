//! Transverse modes, free-space propagation across the fiber/pillar gap and
//! mode-overlap coupling efficiencies.

mod coupling;
mod export;
mod fft;
mod grid;
mod modes;
mod propagate;

pub use coupling::{
    calibrate_waist_ratio, coupling_efficiency, coupling_map, optimal_diameter, overlap, CouplingEngine,
    CouplingLandscape, CouplingMap, CouplingQuery, PillarSpectrum,
};
pub use export::{read_coupling_map_binary, write_coupling_map_binary, write_coupling_map_csv, COUPLING_MAP_MAGIC};
pub use fft::Fft2;
pub use grid::{Grid2D, ScalarField};
pub use modes::{
    make_fiber_mode, make_fiber_mode_at, make_pillar_mode, mode_field_diameter, pillar_mode_family, FiberModeModel,
    FiberSpec, ModeParity, PillarSpec, TransverseMode, CALIBRATED_WAIST_RATIO, PILLAR_PROFILE_V,
};
pub use propagate::{propagate, propagate_unchecked, BOUNDARY_POWER_LIMIT};

use thiserror::Error;

/// Lower edge of the wavelength window the mode models are valid for (nm).
pub const MIN_WAVELENGTH_NM: f64 = 850.0;
/// Upper edge of the wavelength window (nm).
pub const MAX_WAVELENGTH_NM: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("grid spacing {spacing_um:.4} µm exceeds λ/4 = {limit_um:.4} µm")]
    GridTooCoarse { spacing_um: f64, limit_um: f64 },
    #[error("grid extent {extent_um:.2} µm is below 6× the mode waist {waist_um:.3} µm")]
    GridTooSmall { extent_um: f64, waist_um: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("wavelength {0} nm outside the [850, 1000] nm validity window")]
    WavelengthOutOfRange(f64),
    #[error("no guided fundamental mode (V = {0:.3})")]
    NoGuidedMode(f64),
    #[error("unknown transverse mode order {order} (device has {available})")]
    UnknownOrder { order: usize, available: usize },
    #[error("{fraction:.2e} of the propagated power reaches the grid boundary")]
    Aliasing { fraction: f64 },
    #[error("fields are sampled on different grids or wavelengths")]
    GridMismatch,
    #[error("negative propagation distance {0} µm")]
    NegativeDistance(f64),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("field has zero power")]
    ZeroPower,
}

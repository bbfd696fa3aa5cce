pub mod budget;
pub mod config;
pub mod device;
pub mod error;
pub mod measurement;
pub mod optics;
pub mod optimize;
pub mod photon;
pub mod rig;
pub mod service;
pub mod special;
pub mod spectra;

pub use error::{Error, Result};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 42;

use thiserror::Error;

use crate::budget::BudgetError;
use crate::optics::OpticsError;
use crate::photon::PhotonError;
use crate::rig::RigError;
use crate::spectra::SpectraError;

/// Crate-level error, wrapping the per-module error types.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error(transparent)]
    Photon(#[from] PhotonError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error("config: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

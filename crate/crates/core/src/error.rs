use thiserror::Error;

use crate::distributions::DistributionError;
use crate::gpr::GprError;
use crate::hybrid::SpecError;
use crate::oracle::{GridError, OracleError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("surrogate model: {0}")]
    Gpr(#[from] GprError),
    #[error("high-fidelity oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("invalid settings: {0}")]
    Settings(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

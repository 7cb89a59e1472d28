use thiserror::Error;

use crate::absorbing::AbsorbingError;
use crate::domain::DomainError;
use crate::doob::DoobError;
use crate::estimates::EstimateError;
use crate::graph::GraphError;
use crate::io::IoError;
use crate::linalg::SolveError;
use crate::models::ModelError;
use crate::montecarlo::SimError;
use crate::spectral::SpectralError;

/// Union of the per-module errors, for callers that drive several modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Absorbing(#[from] AbsorbingError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Doob(#[from] DoobError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl Error {
    /// True for failures of a numerical method (non-convergence, breakdown,
    /// exhausted truncation budget) as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Solve(e) => e.is_numerical(),
            Error::Absorbing(AbsorbingError::Solve(e)) => e.is_numerical(),
            Error::Absorbing(AbsorbingError::RouteMismatch { .. }) => true,
            Error::Absorbing(_) => false,
            Error::Spectral(e) => e.is_numerical(),
            Error::Doob(e) => e.is_numerical(),
            Error::Estimate(e) => e.is_numerical(),
            Error::Sim(e) => e.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

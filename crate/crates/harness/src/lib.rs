//! Verification, stability and benchmark drivers for the IMEX-Peer
//! integrators: method reports, σ-pattern convergence studies,
//! work-precision sweeps and stored reference solutions.

pub mod reference;
pub mod study;
pub mod table1;
pub mod verify;
pub mod wp;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Integrate(#[from] imex_peer::integrator::IntegrateError),
    #[error(transparent)]
    Problem(#[from] imex_peer::problems::ProblemError),
    #[error(transparent)]
    Tableau(#[from] imex_peer::tableau::TableauError),
    #[error("reference: {0}")]
    Reference(String),
    #[error("{0}")]
    Config(String),
}

/// `max_i |y_i - ŷ_i| / (1 + |ŷ_i|)`
pub fn scaled_error(y: &[f64], reference: &[f64]) -> f64 {
    y.iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
        .fold(0.0, f64::max)
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid system specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |M - M^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("invalid manifold pair: upper N={upper}, lower N={lower} (upper must exceed lower)")]
    InvalidManifolds { upper: usize, lower: usize },

    #[error("excitation manifold N={0} contains no eigenstates")]
    EmptyManifold(usize),

    #[error("state {0} does not carry an integer excitation number")]
    NonIntegerExcitation(usize),

    #[error("decay graph edge {from} -> {to} does not lower the energy")]
    CyclicFlux { from: usize, to: usize },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("numerical instability at t = {t}: {reason}; try a smaller dt")]
    Instability { t: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

use crate::designer::ImpossibilityCertificate;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("annulus tag {tag} is not available for family {family}")]
    IncompatibleTag { tag: String, family: String },
    #[error("level h = {h} is not strictly inside a period annulus")]
    OutsideAnnulus { h: f64 },
    #[error("quadrature did not converge (estimated error {error:e} after {subdivisions} subdivisions)")]
    NonConvergence { error: f64, subdivisions: usize },
    #[error("J_k closed form supports 2 <= k <= 8, got k = {0}")]
    UnsupportedK(usize),
    #[error("expected perturbation degree {expected}, got {found}")]
    DegreeMismatch { expected: usize, found: usize },
    #[error("finite-difference step {0:e} is too small")]
    StepTooSmall(f64),
    #[error("all Melnikov coefficients vanish: M is identically zero")]
    DegenerateAllZero,
    #[error("could not certify {0}")]
    Unachievable(String),
    #[error("configuration (3,3) cannot be realized")]
    TargetImpossible(Box<ImpossibilityCertificate>),
    #[error("integration failed: {0}")]
    IntegrationFailure(String),
    #[error("trajectory left the annulus at H = {h}")]
    LeftAnnulus { h: f64 },
    #[error("coefficient file: {0}")]
    CoeffFile(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate simplex: |det A| = {det:e} below threshold {threshold:e}")]
    DegenerateSimplex { det: f64, threshold: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient matrix is not symmetric")]
    NotSymmetric,

    #[error("coefficient matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("operator degree {degree} exceeds cap {cap}")]
    DegreeOverflow { degree: u32, cap: u32 },

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("mesh has no interior vertices; refine further")]
    EmptyInterior,

    #[error("iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("initial data does not vanish on the boundary (|value| = {value:e} at vertex {vertex})")]
    BoundaryViolation { vertex: usize, value: f64 },

    #[error("time step violates stability: {0}")]
    CflViolation(String),

    #[error("facet {0} is not a tagged boundary facet")]
    NonBoundaryFacet(usize),

    #[error("flux sample at t = {t} arrived before previous sample at t = {last}")]
    OutOfOrderSample { t: f64, last: f64 },

    #[error("initial energy is zero; ratio undefined")]
    ZeroEnergy,

    #[error("mode integers must be distinct positive and increasing: {0:?}")]
    RepeatedMode(Vec<u32>),
}

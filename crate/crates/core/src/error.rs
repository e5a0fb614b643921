use thiserror::Error;

/// Errors raised while building or evaluating programs and their duals.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("outside dual feasible space: column-space residual {residual:.3e}")]
    OutsideFeasible { residual: f64 },

    #[error("G(ς) is singular; the dual Hessian is undefined here")]
    SingularGeometry,

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("chain mismatch: {0}")]
    ChainMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("non-positive distance r = {0}")]
    NonPositiveDistance(f64),

    #[error("atoms {0} and {1} coincide")]
    CoincidentAtoms(usize, usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

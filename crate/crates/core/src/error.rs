use thiserror::Error;

use crate::adaptive::RunHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown domain `{0}` (expected one of: square, lshape, zshape)")]
    UnknownDomain(String),
    #[error("unknown problem `{0}` (expected one of: lshape, zshape)")]
    UnknownProblem(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh file parse error on line {line}: {msg}")]
    MeshParse { line: usize, msg: String },
    #[error("triangle index {index} out of range for mesh with {len} triangles")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),
    #[error("invalid element weight on triangle {triangle}: {reason}")]
    InvalidWeight { triangle: usize, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value {0}")]
    NonFinite(String),
    #[error("problem has no exact solution")]
    MissingExactSolution,
    #[error("invalid linearization method: {0}")]
    InvalidMethod(String),
    #[error("invalid adaptive parameter: {0}")]
    InvalidParameter(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("no contraction ratios recorded")]
    EmptyStats,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numerical defect: {0}")]
    Defect(String),
    #[error("diagnostic data not retained (enable `retain_iterates`)")]
    DiagnosticsOff,
    #[error("safety cap of {cap} algebraic steps exceeded")]
    StepCap { cap: usize, history: Box<RunHistory> },
}

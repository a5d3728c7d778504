use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no ATOM/HETATM records found")]
    EmptyMolecule,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: atom radius must be positive, got {radius}")]
    InvalidRadius { line: usize, radius: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),
    #[error("invalid range split: R_l = {long_rank} must be below folded rank {rank}")]
    InvalidSplit { long_rank: usize, rank: usize },
    #[error("atom {index} at {position:?} lies outside the computational domain")]
    AtomOutOfDomain { index: usize, position: [f64; 3] },
    #[error("atom {index} coincides with boundary node {node}")]
    BoundaryClash { index: usize, node: usize },
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearSolveFailure { iterations: usize, residual: f64 },
    #[error("nonlinear iteration diverged: {0}")]
    NonlinearDivergence(String),
    #[error("potential overflow: |u| = {value:e} exceeds {limit} at unknown {index}")]
    PotentialOverflow { index: usize, value: f64, limit: f64 },
    #[error("Newton oracle failed: {0}")]
    OracleFailure(String),
    #[error("snapshot matrix is identically zero")]
    DegenerateSnapshots,
    #[error("DEIM breakdown at step {step}: interpolation matrix is singular")]
    DeimBreakdown { step: usize },
    #[error("greedy sampling stalled at N = {basis_size}: {reason}")]
    GreedyStalled { basis_size: usize, reason: String },
    #[error("ROM provenance mismatch: {0}")]
    StaleRom(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("malformed container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

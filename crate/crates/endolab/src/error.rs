use thiserror::Error;

/// Errors produced by map construction, verification and search routines.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum EndoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("points live on different tori (sides {0} and {1})")]
    MismatchedTorus(f64, f64),

    #[error("lift inconsistency while computing the induced lattice action: {0}")]
    InconsistentLift(String),

    #[error("construction rejected: {inequality} (got {detail})")]
    Construction { inequality: String, detail: String },

    #[error("unresolved preimage fiber: {0}")]
    UnresolvedFiber(String),

    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),

    #[error("verification report did not pass; no robustness margin available")]
    NoMargin,

    #[error("no certificate: {0}")]
    NotCertifiable(String),

    #[error("curve refinement overflow: {vertices} vertices exceed cap {cap}")]
    RefinementOverflow { vertices: usize, cap: usize },

    #[error("degenerate zero-length segment in polyline")]
    DegenerateSegment,

    #[error("geometry violated: {0}")]
    GeometryViolated(String),

    #[error("escape validation failed at step {step}: orbit re-entered the excluded ball")]
    EscapeInvalid { step: usize },

    #[error("growth not achieved within budget: {0}")]
    NoGrowth(String),

    #[error("operation not supported for this map variant: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, EndoError>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("rejected input: {0}")]
    RejectedInput(String),
    #[error("internal consistency check failed: {0}")]
    Inconsistency(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("propagation failed: {0}")]
    Propagation(String),
    #[error("ambiguous spectrum: {0}")]
    AmbiguousSpectrum(String),
    #[error("no invariant measure: {0}")]
    NoInvariantMeasure(String),
    #[error("oracle degeneracy: {0}")]
    OracleDegeneracy(String),
    #[error("truncation artifact: {0}")]
    TruncationArtifact(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

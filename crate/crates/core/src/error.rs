use nalgebra::DVector;
use thiserror::Error;

/// Errors produced anywhere in the truth, offline or online pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("parameter {mu:?} lies outside the parameter box [{lower:?}, {upper:?}]")]
    OutOfDomain {
        mu: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not positive definite ({context}, pivot {pivot})")]
    NotPositiveDefinite { context: &'static str, pivot: usize },

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("LCP solver did not converge after {iterations} iterations: {reason}")]
    LcpNonConvergence {
        iterations: usize,
        reason: &'static str,
        last_iterate: DVector<f64>,
    },

    #[error("LCP of dimension {n} is too large for exhaustive enumeration (max {max})")]
    LcpTooLarge { n: usize, max: usize },

    #[error("no feasible active set found; the LCP matrix is probably not a P-matrix")]
    NoFeasibleActiveSet,

    #[error("slack has entry {value:e} at index {index}, below the admissible tolerance")]
    InfeasibleSlack { index: usize, value: f64 },

    #[error("snapshot column {column} has negative entry {value:e} at index {index}")]
    NegativeSnapshot {
        column: usize,
        index: usize,
        value: f64,
    },

    #[error("basis is empty after independence filtering: {0}")]
    EmptyBasis(&'static str),

    #[error("reduced constraint matrix is rank deficient (inf-sup failure of the reduced spaces)")]
    RankDeficientConstraint,

    #[error("truth solve failed at mu = {mu:?}: {source}")]
    TruthSolve {
        mu: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("residual quadratic form is negative ({value:e}); the Gramian is corrupted")]
    CorruptGramian { value: f64 },

    #[error("offline artifact: {0}")]
    Artifact(String),

    #[error("offline artifact version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

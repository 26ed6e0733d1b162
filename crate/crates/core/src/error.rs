use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: every subsystem needs at least two levels")]
    InvalidDimension(usize),
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operands live on different space layouts")]
    LayoutMismatch,
    #[error("partial trace needs at least one kept subsystem")]
    EmptyKeepSet,
    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cascade fractions sum to {0}, which exceeds 1")]
    CascadeOverflow(f64),
    #[error("steady state is not unique ({0} zero modes)")]
    DegenerateSteadyState(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("trajectory aborted at t = {time}: {reason}")]
    StepUnderflow { time: f64, reason: String },
    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),
    #[error("CSI coefficient undefined: {0}")]
    UndefinedR(String),
    #[error("projected block has vanishing norm {0:.3e}")]
    VanishingNorm(f64),
    #[error("state has no weight outside the vacuum")]
    AllVacuum,
    #[error("Fock truncation too small for `{slot}`: top-level population {population:.3e}; try truncation {suggested}")]
    Truncation {
        slot: String,
        population: f64,
        suggested: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

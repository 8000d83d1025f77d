use thiserror::Error;

/// Errors produced by the inference routines and the file layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("all weights are zero")]
    AllZero,
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("pruning threshold {epsilon} removes every node (largest weight {largest})")]
    EverythingPruned { epsilon: f64, largest: f64 },
    #[error("label {0:?} is already registered")]
    DuplicateLabel(String),
    #[error("node {lower:?} is not dominated by {upper:?}")]
    DominationViolated { lower: Vec<u32>, upper: Vec<u32> },
    #[error("transition coefficient C({from},{to}) lost all precision (value {value}); use the Monte Carlo path")]
    CancellationFailure { from: u32, to: u32, value: f64 },
    #[error("theta must be positive, got {0}")]
    NonpositiveTheta(f64),
    #[error("exact computation infeasible: {0}; switch to --mode mc")]
    ExactInfeasible(String),
    #[error("every sampled descendant pair has zero q-weight; increase --particles")]
    DegenerateBins,
    #[error("observation {0:?} has no mass under the atomic baseline")]
    UnknownAtom(String),
    #[error("observations have zero probability under every mixture component")]
    ZeroLikelihood,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::AllZero => "AllZero",
            Error::NegativeWeight(_) => "NegativeWeight",
            Error::EverythingPruned { .. } => "EverythingPruned",
            Error::DuplicateLabel(_) => "DuplicateLabel",
            Error::DominationViolated { .. } => "DominationViolated",
            Error::CancellationFailure { .. } => "CancellationFailure",
            Error::NonpositiveTheta(_) => "NonpositiveTheta",
            Error::ExactInfeasible(_) => "ExactInfeasible",
            Error::DegenerateBins => "DegenerateBins",
            Error::UnknownAtom(_) => "UnknownAtom",
            Error::ZeroLikelihood => "ZeroLikelihood",
            Error::Invalid(_) => "Invalid",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

impl Error {
    /// Process exit code: 2 for invalid input, 3 for numeric infeasibility,
    /// 4 for degenerate Monte Carlo output.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AllZero
            | Error::EverythingPruned { .. }
            | Error::CancellationFailure { .. }
            | Error::ExactInfeasible(_)
            | Error::ZeroLikelihood => 3,
            Error::DegenerateBins => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

//! Error types for the linear algebra, moment, bound, and harness layers.

use std::fmt;

/// Errors from dense symmetric linear algebra.
#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// Matrix is not square.
    NotSquare { rows: usize, cols: usize },
    /// Two operands disagree in dimension.
    DimensionMismatch { expected: usize, got: usize },
    /// Symmetry deviation above the construction tolerance.
    Asymmetric { max_dev: f64 },
    /// Cholesky pivot at `index` fell below the positive-definiteness threshold.
    NotPositiveDefinite { index: usize, pivot: f64 },
    /// A block factorization failed inside a Schur-complement or block-inverse formula.
    SingularBlock { context: &'static str },
    /// Index partition is invalid for the given dimension.
    BadPartition { reason: String },
    /// Rejection sampling for a random correlation matrix ran out of attempts.
    GenerationExhausted { attempts: usize },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::NotSquare { rows, cols } => {
                write!(f, "matrix is not square: {rows}x{cols}")
            }
            LinalgError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            LinalgError::Asymmetric { max_dev } => {
                write!(f, "matrix asymmetry {max_dev:e} exceeds tolerance")
            }
            LinalgError::NotPositiveDefinite { index, pivot } => {
                write!(f, "not positive definite: Cholesky pivot {pivot:e} at index {index}")
            }
            LinalgError::SingularBlock { context } => {
                write!(f, "singular block while computing {context}")
            }
            LinalgError::BadPartition { reason } => write!(f, "invalid index partition: {reason}"),
            LinalgError::GenerationExhausted { attempts } => {
                write!(f, "random correlation generation exhausted after {attempts} attempts")
            }
        }
    }
}

impl std::error::Error for LinalgError {}

/// Errors from the moment computation layer.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentError {
    /// Parameter outside the domain where the moment exists (e.g. nu <= -1/2).
    Domain { message: String },
    /// Wick pairing enumeration bound exceeded.
    DegreeTooLarge { degree: usize, max: usize },
    /// Exponent specification violates a precondition.
    InvalidSpec { reason: String },
    /// Quadrature or sampling failed to converge within the evaluation budget.
    BudgetExceeded { used: u64, budget: u64 },
    /// Underlying linear algebra failure.
    Linalg(LinalgError),
}

impl fmt::Display for MomentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentError::Domain { message } => write!(f, "domain error: {message}"),
            MomentError::DegreeTooLarge { degree, max } => {
                write!(f, "total degree {degree} exceeds pairing enumeration bound {max}")
            }
            MomentError::InvalidSpec { reason } => write!(f, "invalid exponent spec: {reason}"),
            MomentError::BudgetExceeded { used, budget } => {
                write!(f, "evaluation budget exceeded: used {used} of {budget}")
            }
            MomentError::Linalg(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for MomentError {}

impl From<LinalgError> for MomentError {
    fn from(e: LinalgError) -> Self {
        MomentError::Linalg(e)
    }
}

/// Errors from bound evaluation and inequality checking.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundError {
    /// A theorem hypothesis does not hold for the requested instance.
    HypothesisViolated { reason: String },
    /// An operation precondition (e.g. Loewner order) failed.
    PreconditionFailed { reason: String },
    /// The requested function/radial pairing has a divergent expectation.
    MomentDiverges { reason: String },
    Moment(MomentError),
    Linalg(LinalgError),
}

impl fmt::Display for BoundError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundError::HypothesisViolated { reason } => {
                write!(f, "hypothesis violated: {reason}")
            }
            BoundError::PreconditionFailed { reason } => {
                write!(f, "precondition failed: {reason}")
            }
            BoundError::MomentDiverges { reason } => write!(f, "moment diverges: {reason}"),
            BoundError::Moment(e) => write!(f, "{e}"),
            BoundError::Linalg(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for BoundError {}

impl From<MomentError> for BoundError {
    fn from(e: MomentError) -> Self {
        BoundError::Moment(e)
    }
}

impl From<LinalgError> for BoundError {
    fn from(e: LinalgError) -> Self {
        BoundError::Linalg(e)
    }
}

/// Errors from the sweep harness and report persistence.
#[derive(Debug)]
pub enum HarnessError {
    /// Sweep configuration is invalid.
    Config(String),
    /// Verdict context was produced by an incompatible schema or code version.
    VersionMismatch { expected: String, got: String },
    /// Requested verdict or report entry does not exist.
    NotFound(String),
    /// Report mixes verdicts from different modes.
    ModeMix { first: String, other: String },
    Bound(BoundError),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(reason) => write!(f, "invalid sweep config: {reason}"),
            HarnessError::VersionMismatch { expected, got } => {
                write!(f, "version mismatch: expected {expected}, got {got}")
            }
            HarnessError::NotFound(what) => write!(f, "not found: {what}"),
            HarnessError::ModeMix { first, other } => {
                write!(f, "report mixes modes {first} and {other}")
            }
            HarnessError::Bound(e) => write!(f, "{e}"),
            HarnessError::Io(e) => write!(f, "io error: {e}"),
            HarnessError::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<BoundError> for HarnessError {
    fn from(e: BoundError) -> Self {
        HarnessError::Bound(e)
    }
}

impl From<MomentError> for HarnessError {
    fn from(e: MomentError) -> Self {
        HarnessError::Bound(BoundError::Moment(e))
    }
}

impl From<LinalgError> for HarnessError {
    fn from(e: LinalgError) -> Self {
        HarnessError::Bound(BoundError::Linalg(e))
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Json(e)
    }
}

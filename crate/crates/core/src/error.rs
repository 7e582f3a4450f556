use thiserror::Error;

/// Errors raised by problem evaluation, linear algebra and the solvers.
///
/// Solver outcomes such as divergence are reported through
/// [`SolveStatus`](crate::descent::SolveStatus), not through this type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NepError {
    #[error("non-finite value returned by {0}")]
    NonFiniteEvaluation(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is numerically singular")]
    Singular,
    #[error("diagonal shift exceeded {limit:e} while forcing positive definiteness")]
    ShiftOverflow { limit: f64 },
    #[error("per-player stationarity solve failed: {0}")]
    InnerSolveFailure(String),
    #[error("unknown problem identifier `{0}`")]
    UnknownProblem(String),
    #[error("could not generate a nonsingular instance after {0} attempts")]
    GenerationFailure(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, NepError>;

pub(crate) fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(NepError::DimensionMismatch { expected, got })
    }
}

pub(crate) fn finite_vec(v: Vec<f64>, what: &'static str) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(NepError::NonFiniteEvaluation(what))
    }
}

pub(crate) fn finite_scalar(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NepError::NonFiniteEvaluation(what))
    }
}

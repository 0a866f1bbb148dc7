use thiserror::Error;

/// Errors raised by the counting, density and integral routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("inconsistent degree: form {index} has degree {found}, expected {expected}")]
    InconsistentDegree {
        index: usize,
        expected: u32,
        found: u32,
    },

    #[error("inconsistent variable count: form {index} has {found} variables, expected {expected}")]
    InconsistentVariables {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("form {0} is identically zero")]
    ZeroForm(usize),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("integer overflow while {0}")]
    Overflow(&'static str),

    #[error("budget exceeded: {what} needs {needed} units, budget is {budget}")]
    BudgetExceeded {
        what: &'static str,
        needed: f64,
        budget: u64,
    },

    #[error("operation requires degree {required}, system has degree {found}")]
    DegreeMismatch { required: u32, found: u32 },

    #[error("leading parts of the system are linearly dependent")]
    DependentSystem,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no empirical decay: {0}")]
    NoDecay(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn budget(what: &'static str, needed: f64, budget: u64) -> Self {
        Error::BudgetExceeded {
            what,
            needed,
            budget,
        }
    }

    /// True for errors caused by invalid user input rather than by limits or numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Malformed(_)
                | Error::InconsistentDegree { .. }
                | Error::InconsistentVariables { .. }
                | Error::ZeroForm(_)
                | Error::DimensionMismatch { .. }
                | Error::DegreeMismatch { .. }
                | Error::DependentSystem
                | Error::InvalidParameter(_)
                | Error::Precondition(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Ensures `needed <= budget`, where `needed` may be astronomically large.
pub(crate) fn check_budget(what: &'static str, needed: f64, budget: u64) -> Result<()> {
    if !needed.is_finite() || needed > budget as f64 {
        Err(Error::budget(what, needed, budget))
    } else {
        Ok(())
    }
}

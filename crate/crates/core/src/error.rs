use thiserror::Error;

/// Errors produced anywhere in the optimization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("value out of range for variable `{name}`: {detail}")]
    OutOfRange { name: String, detail: String },
    #[error("invalid one-hot pattern for categorical variable `{name}`")]
    InvalidOneHot { name: String },
    #[error("non-binary entry `{0}` in discrete vector")]
    NonBinary(String),
    #[error("continuous coordinate {index} = {value} lies outside the unit box")]
    OutOfBox { index: usize, value: f64 },
    #[error("no feasible sample found within {tries} tries")]
    NoFeasibleSample { tries: usize },
    #[error("no binary vector satisfies the constraint set")]
    Infeasible,
    #[error("search budget exhausted without a feasible incumbent")]
    BudgetExhausted,
    #[error("posterior precision factorization failed")]
    Factorization,
    #[error("factor scope too large: {0}")]
    ScopeTooLarge(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("objective evaluation failed: {0}")]
    Objective(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}

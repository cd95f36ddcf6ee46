use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of its documented range.
    #[error("config error: {0}")]
    Config(String),

    /// A numeric argument lies outside the domain of a model function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index out of range: {what} = {index} (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    /// Caller passed something that violates an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The constraint set admits no point (or no binary point).
    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    /// Non-finite objective or gradient; carries the offending iterate.
    #[error("numerical failure: {message}")]
    Numerical { message: String, iterate: Vec<f64> },

    #[error("exhaustive enumeration refused: {candidates} candidates exceed budget {budget}")]
    BudgetExceeded { candidates: f64, budget: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Toml(_) | Error::Domain(_) | Error::Index { .. } => 2,
            Error::Infeasible(_) => 3,
            Error::Numerical { .. } => 4,
            Error::BudgetExceeded { .. } | Error::Contract(_) => 2,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
        }
    }
}

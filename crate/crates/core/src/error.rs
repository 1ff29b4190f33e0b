use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or invalid configuration, detected before any computation.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("formula syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    /// Coordinate exchange could not find a single feasible design from this start.
    #[error("search from start {start} stayed infeasible after a full sweep")]
    InfeasibleSearch { start: usize },

    #[error("every starting design ended infeasible ({count} starts)")]
    AllStartsInfeasible { count: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that stem from the user's inputs rather than the search itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Config(_)
                | Error::Syntax { .. }
                | Error::Shape(_)
                | Error::NonFinite(_)
                | Error::Json(_)
        )
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleSearch { .. } | Error::AllStartsInfeasible { .. }
        )
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, QppError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QppError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate entry for query {query_id}, document {doc_id}")]
    Duplicate {
        line: usize,
        query_id: String,
        doc_id: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("zero robust scale in column {column}; the predictor is constant on the bulk of the queries")]
    ZeroScale { column: String },

    #[error("detection infeasible: {0}")]
    Infeasible(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),
}

impl QppError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        QppError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        QppError::InvalidInput(message.into())
    }
}

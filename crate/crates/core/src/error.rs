use thiserror::Error;

/// Errors raised by model evaluation, fitting, simulation and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate truncation: 1 - P(Y=0) underflows for mu={mu}, r={r}")]
    DegenerateTruncation { mu: f64, r: f64 },

    #[error("ill-conditioned design: linear predictor overflows at row {row}")]
    IllConditionedDesign { row: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("column {column} is constant; Kendall's tau is undefined")]
    ConstantColumn { column: usize },

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("target zero proportion {target} is infeasible (floor {floor:.4})")]
    InfeasibleTarget { target: f64, floor: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("undefined comparison: both distances are zero")]
    UndefinedComparison,

    #[error("selection error: {0}")]
    Selection(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} at index {index} is outside the domain of {what}")]
    Domain {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown operator '{op}' at byte {offset}")]
    UnknownOperator { offset: usize, op: char },

    #[error("column '{0}' not found in data")]
    MissingColumn(String),

    #[error("factor '{0}' has a single observed level")]
    DegenerateFactor(String),

    #[error("length mismatch in {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("{what} is not positive definite (lambda = {lambda:?})")]
    NotPositiveDefinite { what: String, lambda: Vec<f64> },

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("rank deficient: {what}; dependent columns: {}", labels.join(", "))]
    Rank { what: String, labels: Vec<String> },

    #[error("unknown parameter '{label}'; valid labels: {}", valid.join(" "))]
    UnknownLabel { label: String, valid: Vec<String> },

    #[error("ambiguous parameter '{label}'; could be any of: {}", candidates.join(" "))]
    AmbiguousLabel {
        label: String,
        candidates: Vec<String>,
    },

    #[error("hypothesis middle matrix L J L^T is singular")]
    SingularHypothesis,

    #[error("responses do not share the same linear predictor: {0}")]
    PredictorMismatch(String),

    #[error("unknown factor '{0}'")]
    UnknownFactor(String),

    #[error("factor '{factor}' does not appear in the formula of response {response}")]
    FactorNotInFormula { factor: String, response: usize },

    #[error("invalid degrees of freedom {0}")]
    InvalidDf(usize),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("no rows after missing-data removal")]
    EmptyData,

    #[error("fit file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: String },

    #[error("fit file checksum mismatch")]
    Checksum,

    #[error("fit file was produced from a different model specification")]
    SpecHashMismatch,

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Name of the subsystem the error originated from, used in CLI diagnostics.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Domain { .. } | Error::InvalidSpec(_) => "model-spec",
            Error::Syntax { .. }
            | Error::UnknownOperator { .. }
            | Error::MissingColumn(_)
            | Error::DegenerateFactor(_)
            | Error::EmptyData
            | Error::Csv(_) => "formula-design",
            Error::NotPositiveDefinite { .. } | Error::NonFinite(_) => "covariance",
            Error::Singular(_) | Error::Rank { .. } | Error::LengthMismatch { .. } => "estimator",
            Error::UnknownLabel { .. }
            | Error::AmbiguousLabel { .. }
            | Error::SingularHypothesis => "wald",
            Error::InvalidDf(_) => "stat-dist",
            Error::PredictorMismatch(_) => "suites",
            Error::UnknownFactor(_) | Error::FactorNotInFormula { .. } => "multcomp",
            Error::VersionMismatch { .. }
            | Error::Checksum
            | Error::SpecHashMismatch
            | Error::Io(_)
            | Error::Json(_) => "io",
        }
    }
}

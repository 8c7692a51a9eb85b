use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("empty population")]
    EmptyPopulation,

    #[error("missing column `{column}`")]
    MissingColumn { column: String },

    #[error("duplicate subject id `{id}` (row {row})")]
    DuplicateId { id: String, row: usize },

    #[error("subject `{subject}`: missing value for characteristic `{characteristic}` (column `{column}`)")]
    MissingValue { subject: String, characteristic: String, column: String },

    #[error("subject `{subject}`: value `{value}` of characteristic `{characteristic}` matches no group")]
    Unmappable { subject: String, characteristic: String, value: String },

    #[error("invalid schema for `{characteristic}`: {reason}")]
    InvalidSchema { characteristic: String, reason: String },

    #[error("unknown characteristic `{0}`")]
    UnknownCharacteristic(String),

    #[error("unknown group `{group}` in characteristic `{characteristic}`")]
    UnknownGroup { characteristic: String, group: String },

    #[error("unknown subject id `{0}`")]
    UnknownSubject(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("kl divergence undefined: q is zero at stratum {stratum} where p > 0")]
    KlSupport { stratum: usize },

    #[error("non-numeric value `{value}` in column `{column}` (subject `{subject}`)")]
    NonNumeric { column: String, subject: String, value: String },

    #[error("all sampling weights are zero")]
    AllWeightsZero,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("range grid too large: {count} points exceeds limit {limit}")]
    GridTooLarge { count: u128, limit: u128 },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Whether the error reports a problem with the user's inputs rather than
    /// an environment failure or infeasibility.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Infeasible(_) | Error::Csv(_) | Error::Json(_))
    }
}

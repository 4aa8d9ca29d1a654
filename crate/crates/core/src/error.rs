use thiserror::Error;

/// Errors raised by the library and the audit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },
    #[error("weight at position {index} is not positive after normalization ({value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("probability {0} outside (0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("supports span {width}, which exceeds the bound L = {bound}")]
    SupportTooWide { width: f64, bound: f64 },
    #[error("model expects {expected} features, got {actual}")]
    ArityMismatch { expected: usize, actual: usize },
    #[error("model kind `{0}` cannot be evaluated at arbitrary inputs")]
    NotEvaluable(&'static str),
    #[error("operation requires an additive model, got `{0}`")]
    NotAdditive(&'static str),
    #[error("operation requires a linear model, got `{0}`")]
    NotLinear(&'static str),
    #[error("protected class {0} has no samples")]
    MissingClass(usize),
    #[error("protected label {0} is not allowed here (expected 0 or 1)")]
    InvalidLabel(usize),
    #[error("feature index {index} out of range for {n} features")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("{players} players exceed the exact-enumeration cap of {cap}; group features with a partition instead")]
    CapExceeded { players: usize, cap: usize },
    #[error("coalition table has {actual} entries, expected {expected}")]
    MissingCoalition { expected: usize, actual: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid group parity specification: {0}")]
    InvalidParity(String),
    #[error("unknown model id `{0}`")]
    UnknownModel(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code for the CLI: 2 configuration, 3 data, 4 cap exceeded.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Json(_)
            | Error::UnknownModel(_)
            | Error::InvalidParams(_)
            | Error::InvalidPartition(_)
            | Error::InvalidParity(_)
            | Error::NotAdditive(_)
            | Error::NotLinear(_)
            | Error::NotEvaluable(_)
            | Error::InvalidArgument(_) => 2,
            Error::CapExceeded { .. } => 4,
            _ => 3,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

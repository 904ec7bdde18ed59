use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("value out of range: {field} = {value} (allowed {min}..={max})")]
    Range {
        field: String,
        value: i64,
        min: i64,
        max: i64,
    },

    #[error("dataset integrity: {0}")]
    Integrity(String),

    #[error("variant `{0}` is unavailable for this corpus")]
    UnavailableVariant(String),

    #[error("score is undefined: {0}")]
    UndefinedScore(String),

    #[error("backend contract violated: {0}")]
    BackendContract(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("operation not supported by backend `{0}`")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("incomplete input: {0}")]
    IncompleteInput(String),

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("insufficient systems: need at least 3, found {0}")]
    InsufficientSystems(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

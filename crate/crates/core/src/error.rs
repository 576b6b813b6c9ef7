use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension {requested} exceeds the bundled direction-number table (max {max})")]
    UnsupportedDimension { requested: usize, max: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("time {t} lies outside the bridge interval [{a}, {b}]")]
    OutsideBridge { t: f64, a: f64, b: f64 },

    #[error("time {0} is already part of the bridge skeleton")]
    TimeAlreadyPresent(f64),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("filter degeneracy at step {step} (t = {time}): every particle has zero weight")]
    Degeneracy { step: usize, time: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("grid too small: boundary cells carry mass {mass:e}")]
    GridTooSmall { mass: f64 },

    #[error("rejection sampler gave up after {0} trials")]
    RejectionCap(u64),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 for configuration problems,
    /// 3 for numeric or degeneracy failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::Json(_)
            | Error::UnknownModel(_)
            | Error::InvalidModel(_)
            | Error::InvalidArgument(_)
            | Error::UnsupportedDimension { .. }
            | Error::Unsupported(_) => 2,
            Error::Numeric(_)
            | Error::Degeneracy { .. }
            | Error::Invariant(_)
            | Error::GridTooSmall { .. }
            | Error::RejectionCap(_) => 3,
            _ => 1,
        }
    }
}

use thiserror::Error;

/// Errors raised by the engine, the data pipeline and the debugger.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("empty tensor passed to {0}")]
    EmptyTensor(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("too few samples for {what}: need {need}, got {got}")]
    TooFewSamples {
        what: &'static str,
        need: usize,
        got: usize,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("class {class} has {available} rows, {requested} requested")]
    InsufficientClassRows {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("fault {fault} is not applicable to {program}")]
    InapplicableFault { fault: String, program: String },

    #[error("configuration error: {0}")]
    Config(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

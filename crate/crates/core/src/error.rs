use thiserror::Error;

/// Errors raised by the toolkit.
///
/// The variants follow the failure classes used throughout the crate:
/// bad configuration, broken caller contracts, numerical blow-ups during
/// simulation or evaluation, missing flow capabilities and bad data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("simulation error at node {node} (t = {time}): {message}")]
    Simulation {
        node: usize,
        time: f64,
        message: String,
    },

    #[error("evaluation error at t = {time}, x = {x:?}: {message}")]
    Evaluation {
        time: f64,
        x: Vec<f64>,
        message: String,
    },

    #[error("capability error: {0}")]
    Capability(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Same error with `context: ` prepended to its message.
    pub fn context(self, context: impl std::fmt::Display) -> Error {
        let pre = |m: String| format!("{context}: {m}");
        match self {
            Error::Config(m) => Error::Config(pre(m)),
            Error::Contract(m) => Error::Contract(pre(m)),
            Error::Simulation { node, time, message } => Error::Simulation {
                node,
                time,
                message: pre(message),
            },
            Error::Evaluation { time, x, message } => Error::Evaluation {
                time,
                x,
                message: pre(message),
            },
            Error::Capability(m) => Error::Capability(pre(m)),
            Error::Data(m) => Error::Data(pre(m)),
            Error::Parse { offset, message } => Error::Parse {
                offset,
                message: pre(message),
            },
            Error::Io(m) => Error::Io(pre(m)),
        }
    }
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

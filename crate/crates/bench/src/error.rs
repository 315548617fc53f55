use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// `line` is 0 when the problem is not tied to one line.
    #[error("{}", config_message(*line, msg))]
    Config { line: usize, msg: String },
    #[error(transparent)]
    Core(#[from] ctfdbf_core::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_message(line: usize, msg: &str) -> String {
    if line == 0 {
        format!("config: {msg}")
    } else {
        format!("config line {line}: {msg}")
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn format_err(msg: impl Into<String>) -> Error {
    Error::Core(ctfdbf_core::Error::Format(msg.into()))
}

pub(crate) fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

impl Error {
    /// Process exit status: 1 I/O, 2 configuration, 3 data format, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        use ctfdbf_core::Error as C;
        match self {
            Error::Io(_) | Error::Core(C::Io(_)) => 1,
            Error::Config { .. } | Error::Core(C::Domain(_)) => 2,
            Error::Json(_) | Error::Core(C::Format(_) | C::Shape(_)) => 3,
            Error::Core(C::Numeric(_)) => 4,
            Error::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(_) => 1,
                _ => 3,
            },
        }
    }
}

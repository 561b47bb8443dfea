use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments: dimension mismatches, out-of-range indices.
    #[error("invalid input: {0}")]
    Input(String),
    /// Argument outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Factorization failure or an optimization with no valid candidate.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable tag, used by the CLI's one-line error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Domain(_) => "domain",
            Error::Numeric(_) => "numeric",
            Error::Config(_) => "config",
            Error::Unsupported(_) => "unsupported",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

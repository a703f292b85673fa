use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Where a piece of input came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub file: String,
    pub line: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad or inconsistent user configuration. `path` names the offending key.
    #[error("configuration error at '{path}': {message}")]
    Config { path: String, message: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    /// API misuse by the caller (bad index, inactive element, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("inverted or degenerate element {element}: det J = {det:e}")]
    Geometry { element: usize, det: f64 },

    #[error("linear solver error: {0}")]
    Solver(String),

    #[error("Newton did not converge after {iterations} iterations (|R| = {final_norm:e})")]
    NonConvergence { iterations: usize, final_norm: f64, norms: Vec<f64> },

    #[error("time step {step} failed: {source}")]
    Step { step: usize, source: Box<Error> },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    pub fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse { location: Location { file: file.into(), line }, message: message.into() }
    }
}

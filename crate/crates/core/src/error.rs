use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library reports. The `Display` text starts with the
/// error category (`shape`, `singular`, ...) so CLI diagnostics stay greppable.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape: expected {expected:?}, found {found:?}")]
    Shape {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("shape: {0}")]
    ShapeMsg(String),
    #[error("singular: division by exact zero at element {index}")]
    Singular { index: usize },
    #[error("invalid-sigma: standard deviation must be >= 0, got {0}")]
    InvalidSigma(f64),
    #[error("config: {0}")]
    Config(String),
    #[error("label: class id {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("io: {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format: {0}")]
    Format(String),
    #[error("insufficient: class {class} has {available} samples, {requested} requested")]
    Insufficient {
        class: usize,
        available: usize,
        requested: usize,
    },
}

impl Error {
    pub(crate) fn shape(expected: &[usize], found: &[usize]) -> Self {
        Error::Shape {
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }

    /// The category keyword that prefixes the message.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } | Error::ShapeMsg(_) => "shape",
            Error::Singular { .. } => "singular",
            Error::InvalidSigma(_) => "invalid-sigma",
            Error::Config(_) => "config",
            Error::Label { .. } => "label",
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Insufficient { .. } => "insufficient",
        }
    }
}

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::data_io::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Both operands of an overlap computation have zero area.
    #[error("undefined overlap: {0}")]
    UndefinedOverlap(String),

    #[error("invalid reference: {0}")]
    InvalidReference(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A counting metric whose denominator is zero. Reported as absent, never as 0.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("undefined precision/recall curve: {0}")]
    UndefinedCurve(String),

    #[error("{}", DiagnosticList(.0))]
    Validation(Vec<Diagnostic>),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the file system rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

struct DiagnosticList<'a>(&'a [Diagnostic]);

impl fmt::Display for DiagnosticList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation error(s)", self.0.len())?;
        for d in self.0 {
            write!(f, "\n  {d}")?;
        }
        Ok(())
    }
}

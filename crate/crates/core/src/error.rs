use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the noise model.
    #[error("domain error: {0}")]
    Domain(String),

    /// A value violates a type invariant.
    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("at pixel ({x}, {y}): {source}")]
    AtPixel {
        x: usize,
        y: usize,
        source: Box<Error>,
    },

    /// The DPF1 payload is inconsistent with its header.
    #[error("malformed frame file: {0}")]
    Format(String),

    #[error("metadata sidecar {}: {reason}", path.display())]
    Sidecar { path: PathBuf, reason: String },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("no depth discontinuity found in the search band")]
    NoEdge,

    #[error("ambiguous edge: {0}")]
    AmbiguousEdge(String),

    /// An error tagged with the file or item it concerns.
    #[error("{label}: {source}")]
    Context { label: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable token naming the error class, for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Invalid(_) => "invalid",
            Error::AtPixel { source, .. } | Error::Context { source, .. } => source.kind(),
            Error::Format(_) => "format",
            Error::Sidecar { .. } => "sidecar",
            Error::Degenerate(_) => "degenerate",
            Error::InsufficientData(_) => "insufficient-data",
            Error::RankDeficient(_) => "rank-deficient",
            Error::NoEdge => "no-edge",
            Error::AmbiguousEdge(_) => "ambiguous-edge",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Tags the error with the file or item it concerns.
    pub fn context(self, label: impl Into<String>) -> Self {
        Error::Context {
            label: label.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn at_pixel(self, x: usize, y: usize) -> Self {
        Error::AtPixel {
            x,
            y,
            source: Box::new(self),
        }
    }
}

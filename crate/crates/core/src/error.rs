use thiserror::Error;

/// Errors produced by the simulation and estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical blowup at t = {time}")]
    Blowup { time: f64 },

    #[error("no periodic return within {t_max} time units")]
    NoCycle { t_max: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("insufficient samples: got {got}, need {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("config error in `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a domain rule (wall cell, start on goal, bad probability).
    #[error("invalid domain value: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("SOPR not calculable: {0}")]
    Calculability(String),
    #[error("degenerate MDP: {0}")]
    Degenerate(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("request too large: {0}")]
    TooLarge(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("exact computation unavailable: {0}")]
    ExactnessUnavailable(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error JSON and FFI status codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Numerical(_) => "numerical",
            Error::Calculability(_) => "calculability",
            Error::Degenerate(_) => "degenerate",
            Error::Shape(_) => "shape",
            Error::TooLarge(_) => "too_large",
            Error::Config(_) => "config",
            Error::Validation(_) => "validation",
            Error::InsufficientSamples(_) => "insufficient_samples",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::ExactnessUnavailable(_) => "exactness_unavailable",
            Error::Io(_) => "io",
            Error::Csv(e) if e.is_io_error() => "io",
            Error::Json(_) | Error::Csv(_) | Error::Toml(_) => "parse",
        }
    }
}

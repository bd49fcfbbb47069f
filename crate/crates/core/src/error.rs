use std::fmt;

use serde::{Deserialize, Serialize};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("spec: {0}")]
    Spec(String),

    #[error("samples: {0}")]
    Samples(String),

    #[error("estimation: degenerate density at quantile target {index} (value {value:e})")]
    DegenerateDensity { index: usize, value: f64 },

    #[error("covariance: insufficient data ({0})")]
    InsufficientData(String),

    #[error("covariance: batch configuration: {0}")]
    BatchConfig(String),

    #[error("{module}: non-finite value: {detail}")]
    Numeric { module: &'static str, detail: String },

    #[error("mvn: matrix not positive definite (pivot {pivot}, value {value:e})")]
    Factorization { pivot: usize, value: f64 },

    #[error("mvn: invalid problem: {0}")]
    MvnProblem(String),

    #[error("mvn: probability {0} outside the open unit interval")]
    Domain(f64),

    #[error("region: {0}")]
    Region(String),

    #[error("samplers: {0}")]
    Sampler(String),

    #[error("harness: {0}")]
    Harness(String),

    #[error("ingest: line {line}: {message}")]
    Ingest { line: u64, message: String },

    #[error("ingest: {0}")]
    Format(String),

    #[error("plot: {0}")]
    Plot(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A non-fatal diagnostic, tagged with the module that raised it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub module: String,
    pub message: String,
}

impl Warning {
    pub fn new(module: &str, message: impl Into<String>) -> Self {
        Self {
            module: module.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.module, self.message)
    }
}

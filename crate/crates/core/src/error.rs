use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("sensor corrupt: non-finite sample")]
    SensorCorrupt,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),
    #[error("rank deficient regression ({rank} of {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },
    #[error("not enough samples: need {needed}, have {have}")]
    TooFewSamples { needed: usize, have: usize },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: field `{field}`: {message}")]
    Invalid {
        path: String,
        field: String,
        message: String,
    },
    #[error("{path}: unsupported schema_version {found} (expected {expected})")]
    Schema {
        path: String,
        found: u32,
        expected: u32,
    },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("numerical fault at t = {t:.3} s: {what}")]
    Numerical { t: f64, what: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("log i/o: {0}")]
    Log(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

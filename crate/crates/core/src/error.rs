use thiserror::Error;

/// Errors raised by the estimation and simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImputeError {
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The respondent design matrix for `model` is rank deficient or too short.
    #[error("singular fit for model {model}: {reason}")]
    SingularFit { model: String, reason: String },

    #[error("degenerate fit for model {model}: {reason}")]
    DegenerateFit { model: String, reason: String },

    #[error("no candidate model could be fitted")]
    SelectionFailure,

    /// Variance estimate came out negative or non-finite.
    #[error("variance estimation failed: {0}")]
    EstimationFailure(String),

    #[error("metric undefined: {0}")]
    Metric(String),
}

pub type Result<T> = std::result::Result<T, ImputeError>;

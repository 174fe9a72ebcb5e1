use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("unknown entry law `{0}` (expected gaussian, uniform, bernoulli or smoothed_bernoulli)")]
    UnknownLaw(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed law string `{0}`: expected name:variance[:sigma_mix]")]
    MalformedLaw(String),

    #[error("entry law `{0}` has no density; the score-integral regularity hypothesis fails")]
    NoDensity(String),

    #[error("entry law `{law}` fails the regularity hypothesis: {reason}")]
    HypothesisFailed { law: String, reason: String },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("malformed matrix file: {0}")]
    MatrixFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::UnknownLaw(_) => "unknown_law",
            LabError::InvalidParameter(_) => "invalid_parameter",
            LabError::MalformedLaw(_) => "malformed_law",
            LabError::NoDensity(_) => "no_density",
            LabError::HypothesisFailed { .. } => "hypothesis_failed",
            LabError::Eigensolver(_) => "eigensolver",
            LabError::EmptySample(_) => "empty_sample",
            LabError::MatrixFormat(_) => "matrix_format",
            LabError::Io(_) => "io",
            LabError::Json(_) => "json",
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidParameter(msg.into())
}

use thiserror::Error;

use crate::endpoint::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite (smallest eigenvalue {smallest_eigenvalue:.3e})")]
    NotPositiveDefinite { smallest_eigenvalue: f64 },

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("invalid design:\n{0}")]
    InvalidDesign(ValidationReport),

    #[error("unsupported dimension {dim} (maximum {max})")]
    UnsupportedDimension { dim: usize, max: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("effect too small: target power not reached by n = {n_max}")]
    EffectTooSmall { n_max: u64 },

    #[error("responder threshold {threshold} for outcome '{outcome}' does not coincide with a category cut")]
    MisalignedThreshold { outcome: String, threshold: f64 },

    #[error("design has no responder rule")]
    MissingResponderRule,

    #[error("dataset error: {0}")]
    Data(String),

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("covariance of the estimates is unusable: {0}")]
    UnusableCovariance(String),

    #[error("non-finite Hessian entry at ({0}, {1})")]
    NonFiniteHessian(String, String),

    #[error("negative delta-method variance {0:.3e}")]
    NegativeVariance(f64),

    #[error("{failed} of {attempted} replications failed to fit (limit 5%)")]
    TooManyFitFailures { failed: usize, attempted: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Dimension(_)
                | Error::InvalidCorrelation(_)
                | Error::InvalidDesign(_)
                | Error::UnsupportedDimension { .. }
                | Error::Infeasible(_)
                | Error::MisalignedThreshold { .. }
                | Error::MissingResponderRule
                | Error::Data(_)
                | Error::Config(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

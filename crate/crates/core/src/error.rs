use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine did not reach its tolerance.
    #[error("numerical error: {msg} (achieved error estimate {err_est:.3e})")]
    Numerical { msg: String, err_est: f64 },

    /// The model or covariance is not usable (not PSD, factorization failure, bad parameters).
    #[error("model error: {0}")]
    Model(String),

    /// A sample cannot be turned into an estimate (e.g. a zero variation).
    #[error("invalid sample: {0}")]
    InvalidSample(String),

    /// The requested operation does not apply in this asymptotic regime.
    #[error("regime error: {0}")]
    Regime(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn check_index(name: &str, h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must lie in (0,1), got {h}")))
    }
}

/// `K ∈ (0, 1]`; `K = 1` is FBM and is kept for the reduction checks.
pub(crate) fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k <= 1.0 {
        Ok(())
    } else {
        Err(domain(format!("k must lie in (0,1], got {k}")))
    }
}

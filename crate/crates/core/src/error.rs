use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("factorization of H - σI failed at σ = {shift} after {attempts} attempts")]
    Factorization { shift: f64, attempts: usize },

    #[error("eigensolver did not converge: {found} of {wanted} eigenpairs below {cutoff} (partial results available)")]
    NotConverged { wanted: usize, found: usize, cutoff: f64 },

    #[error("spectrum incomplete: requested λ = {requested} exceeds completeness cutoff {cutoff}")]
    IncompleteSpectrum { requested: f64, cutoff: f64 },

    #[error("matrix dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("{0}")]
    BelowResolution(String),

    #[error("too many failed samples: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::InvalidArgument(_))
    }
}

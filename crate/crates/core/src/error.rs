use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("process is not Schur stable (spectral radius {spectral_radius:.6} >= 1)")]
    Unstable { spectral_radius: f64 },

    #[error("transition matrix is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("Markov chain has no unique aperiodic stationary law: {0}")]
    NoUniqueStationary(String),

    #[error("degenerate design: minimum Gram eigenvalue {min_eig:e}")]
    DegenerateDesign { min_eig: f64 },

    #[error("matrix is not positive definite (minimum eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("mixing profile has no coefficient for gap(s) {0:?}")]
    MissingCoefficient(Vec<usize>),

    #[error("unsupported process specification: {0}")]
    UnsupportedSpec(String),

    #[error("iteration did not converge: {0}")]
    NotConverged(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the caller's arguments or configuration
    /// rather than by the numerics.
    pub fn is_argument_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::Config(_) | Error::UnsupportedSpec(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

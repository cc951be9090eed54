use thiserror::Error;

/// Errors raised across the estimation, information-gain and identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs with incompatible shapes or values outside their contract.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A covariance (or innovation covariance) failed its Cholesky factorization.
    #[error("matrix is not positive definite: {context}\n{matrix}")]
    NotPositiveDefinite { context: String, matrix: String },

    /// Simulated state grew beyond the divergence threshold.
    #[error("simulation diverged at step {step} (|x| = {norm:.3e}); parameters: {params}")]
    Divergence {
        step: usize,
        norm: f64,
        params: String,
    },

    /// Fixed-point iteration hit its iteration cap.
    #[error("riccati iteration did not converge after {iterations} iterations (last relative change {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Every optimizer restart produced a non-finite objective.
    #[error("fit failed: all restarts diverged (objectives: {objectives:?})")]
    FitFailure { objectives: Vec<f64> },

    /// Malformed configuration document.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn not_pd(context: impl Into<String>, matrix: &impl std::fmt::Display) -> Self {
        Error::NotPositiveDefinite {
            context: context.into(),
            matrix: format!("{matrix}"),
        }
    }

    /// True for errors caused by numerics rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::Divergence { .. }
                | Error::NoConvergence { .. }
                | Error::FitFailure { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

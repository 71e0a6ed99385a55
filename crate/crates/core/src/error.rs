use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    /// The step size breaks `alpha < min{1/((2k0 + 1/2) L_D), 1/(2 L_D)}`.
    #[error(
        "step size {alpha} violates the step-size condition alpha < min{{1/((2k0+1/2)L_D), 1/(2L_D)}} = {limit} (k0 = {k0}, L_D = {lipschitz})"
    )]
    StepSize {
        alpha: f64,
        limit: f64,
        k0: usize,
        lipschitz: f64,
    },

    #[error("schedule rejected: {0}")]
    Schedule(String),

    #[error("negative inexactness budget {0}")]
    NegativeBudget(f64),

    #[error("non-finite value in {what} at iteration {k}")]
    Divergence { what: &'static str, k: usize },

    #[error(
        "reference solver did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("{0}")]
    Trace(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::StepSize { .. } => 3,
            Error::Divergence { .. } | Error::NoConvergence { .. } => 4,
            _ => 2,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integration diverged{}", fmt_stage(*stage))]
    IntegrationDiverged { stage: Option<usize> },

    #[error("invalid input bounds: component {index} has upper bound {hi} <= lower bound {lo}")]
    InvalidBounds { index: usize, lo: f64, hi: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("block at stage {stage} is not positive definite")]
    NotPositiveDefinite { stage: usize },

    #[error("Newton solve failed at IPM iteration {iteration}: {source}")]
    SolverFailure {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dense Newton matrix is not positive definite (pivot {pivot})")]
    SingularNewtonSystem { pivot: usize },

    #[error("non-finite Newton direction")]
    NonFiniteDirection,

    #[error("certified invariant violated at iteration {iteration}: {what}")]
    InvariantViolation { iteration: usize, what: String },

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("closed-loop step {step}: {source}")]
    Simulation {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_stage(stage: Option<usize>) -> String {
    stage.map(|k| format!(" at stage {k}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed user input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::InvalidBounds { .. } | Error::Dimension(_)
        )
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("singular matrix: pivot {pivot:e} in column {column} below threshold {threshold:e}")]
    Singular {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("integration failed at step {step} (t = {t}): {reason}")]
    Integration { step: usize, t: f64, reason: String },

    #[error(
        "step size underflow at t = {t} (h = {h:e}); problem looks stiff, \
         use the self-convergence reference instead"
    )]
    Stiffness { t: f64, h: f64 },

    #[error("reference did not converge: {0}")]
    NonConvergence(String),

    #[error("relative error undefined: reference component {component} has zero time-mean")]
    MetricUndefined { component: usize },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::MetricUndefined { .. } => 2,
            Error::Evaluation(_)
            | Error::Singular { .. }
            | Error::Integration { .. }
            | Error::Csv(_)
            | Error::Io(_) => 3,
            Error::Stiffness { .. } | Error::NonConvergence(_) => 4,
        }
    }
}

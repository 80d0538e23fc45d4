use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain of the operation (e.g. a support index).
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimensions or support sizes do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// An argument violates its documented contract.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Not enough points to satisfy a request.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// A non-finite value appeared during a computation. `layer` is set when
    /// the value came out of a network layer.
    #[error("numeric error{}: {message}", layer.map(|l| format!(" at layer {l}")).unwrap_or_default())]
    Numeric { layer: Option<usize>, message: String },

    /// All densities vanish at the point, so the optimal discriminator is undefined.
    #[error("optimal discriminator undefined: all densities are zero at this point")]
    UndefinedPoint,

    /// Training produced a non-finite loss; the state was rolled back to `last_good_step`.
    #[error("training aborted at step {step}: non-finite loss (last good step {last_good_step})")]
    TrainingAborted { step: u64, last_good_step: u64 },

    #[error("checkpoint error ({path}): {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numeric(layer: Option<usize>, message: impl Into<String>) -> Self {
        Error::Numeric {
            layer,
            message: message.into(),
        }
    }
}

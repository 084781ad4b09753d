use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or parameters that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// Data that is structurally fine but numerically unusable.
    #[error("input error: {0}")]
    Input(String),

    #[error("horizon criterion undefined: every state has tied action values")]
    UndefinedCriterion,

    #[error("MaxEnt IRL diverged at iteration {iteration}: non-finite weights")]
    Diverged { iteration: usize },

    #[error("non-finite loss {loss} at gradient step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },

    #[error("solver did not converge within {sweeps} sweeps (last change {last_change:e})")]
    NotConverged { sweeps: usize, last_change: f64 },

    #[error("missing result cells: {}", .0.join(", "))]
    MissingCells(Vec<String>),

    #[error("stage `{stage}` failed for seed {seed}: {source}")]
    Stage {
        stage: &'static str,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

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

    pub(crate) fn at_stage(self, stage: &'static str, seed: u64) -> Self {
        Error::Stage {
            stage,
            seed,
            source: Box::new(self),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, batch {batch} (loss is not finite)")]
    Training { epoch: usize, batch: usize },

    #[error("training failed at tau = {tau}: {source}")]
    TrainingAtQuantile {
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("vertex {0} has zero degree")]
    DegenerateGraph(usize),

    #[error("base edge set is empty; no edge survives the threshold at the lowest quantile")]
    EmptyGraph,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

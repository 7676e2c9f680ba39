use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{context}: non-finite value in row {row}")]
    NonFinite { context: &'static str, row: usize },
    #[error("invalid CSR structure: {0}")]
    Csr(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("loss node must be 1x1, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("invalid bundle: {0}")]
    Invalid(String),
    #[error("split infeasible: {0}")]
    SplitInfeasible(String),
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("node {node} is in the labeled mask but has no label")]
    UnknownLabel { node: usize },
    #[error("row {row} is outside the probability simplex ({detail})")]
    OutsideSimplex { row: usize, detail: String },
    #[error("probability {value} at index {index} is on the simplex boundary")]
    Boundary { index: usize, value: f64 },
    #[error("labeled set is empty")]
    EmptyLabeled,
    #[error("unlabeled set is empty while its coefficient is nonzero")]
    EmptyUnlabeled,
    #[error("unsupported entropy order q={0}; only 1 and 2 are defined")]
    UnsupportedOrder(u8),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("evaluation mask is empty")]
    EmptyMask,
    #[error("node {0} in the evaluation mask has no label")]
    UnknownLabel(usize),
    #[error("ROC-AUC needs both classes in the mask")]
    SingleClass,
    #[error("baseline standard deviation is zero; report the raw difference instead")]
    ZeroStd,
    #[error("no values to aggregate")]
    Empty,
    #[error("no matched baseline for {0}")]
    MissingBaseline(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

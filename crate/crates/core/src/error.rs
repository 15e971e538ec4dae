use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse model: {0}")]
    Parse(String),

    #[error("shape mismatch in layer {layer}: {detail}")]
    ShapeMismatch { layer: usize, detail: String },

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("neuron ({layer}, {neuron}) is out of range")]
    OutOfRange { layer: usize, neuron: usize },

    #[error("label {label} is out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("no sign change of the tangent residual on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("bisection did not converge (residual {residual:e})")]
    NonConvergence { residual: f64 },

    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("oracle grid mode supports at most 3 input dimensions, got {0}")]
    OracleDimension(usize),

    #[error("malformed dataset: {0}")]
    Dataset(String),

    #[error("invalid architecture string `{0}`")]
    Architecture(String),

    #[error("report error: {0}")]
    Report(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

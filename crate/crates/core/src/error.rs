use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input component {index}: {value}")]
    NonFiniteInput { index: usize, value: f64 },

    #[error("non-finite value produced by tape node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },

    #[error("handle does not belong to this tape")]
    ForeignHandle,

    #[error("expected a scalar node, got batch {batch} x width {width}")]
    NotScalar { batch: usize, width: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("denominator {value:e} below floor {floor:e} at point {point:?}")]
    SmallDenominator {
        value: f64,
        floor: f64,
        point: Vec<f64>,
    },

    #[error("{variant} requires the `{field}` field")]
    MissingField {
        field: &'static str,
        variant: &'static str,
    },

    #[error("reference solution vanishes on the evaluation set")]
    ZeroReference,

    #[error("invalid network spec: {0}")]
    InvalidNetwork(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("unknown experiment `{id}`; valid ids: {valid}")]
    UnknownExperiment { id: String, valid: String },

    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("non-finite gradient at step {step}, parameter index {index}")]
    NonFiniteGradient { step: u64, index: usize },

    #[error("loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("invalid shape {shape:?} for {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },

    #[error("token id {id} is outside an embedding table of {rows} rows")]
    UnknownTokenId { id: usize, rows: usize },

    #[error("cannot encode an empty token sequence")]
    EmptySequence,

    #[error("parameter name mismatch: {0}")]
    NameMismatch(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = NeuralError> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NeuralError {
    NeuralError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: missing or invalid field `{field}`")]
    Schema { line: usize, field: String },

    #[error("document `{id}` failed validation: {}", .violations.join("; "))]
    Validation { id: String, violations: Vec<String> },

    #[error("encoder: {0}")]
    Encoder(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint config hash {found:016x} does not match {expected:016x}")]
    ConfigHash { found: u64, expected: u64 },

    #[error("corrupt checkpoint at byte offset {offset}: {message}")]
    CorruptCheckpoint { offset: usize, message: String },

    #[error("non-finite loss {loss} at step {step} on document `{doc_id}`")]
    NonFiniteLoss { step: usize, doc_id: String, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

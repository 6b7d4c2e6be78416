use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a shape, length or range contract.
    #[error("structural error: {0}")]
    Structural(String),

    /// A filter stage cannot be applied to the frames reaching it.
    #[error("stage {stage}: {msg}")]
    Stage { stage: usize, msg: String },

    #[error("training diverged at epoch {epoch}, example {index} (log-likelihood {value})")]
    Divergence { epoch: usize, index: usize, value: f64 },

    #[error("read error at byte offset {offset}: {msg}")]
    Read { offset: u64, msg: String },

    #[error("unsupported {what} version {found} (expected {expected})")]
    Version { what: &'static str, found: u32, expected: u32 },

    #[error("checkpoint was written for a different network configuration")]
    ConfigHashMismatch,

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}

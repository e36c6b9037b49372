use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not a numeral: {0:?}")]
    NotANumeral(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range for table of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("character {0:?} is not in the character vocabulary")]
    UnknownCharacter(char),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} is not on the precision-{precision} grid")]
    OffGrid { value: f64, precision: u32 },

    #[error("token class {0} is not supported by this model")]
    UnsupportedClass(&'static str),

    #[error("need at least {needed} distinct values, found {found}")]
    TooFewDistinct { needed: usize, found: usize },

    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),

    #[error("non-finite loss on document {doc}")]
    NonFiniteLoss { doc: usize },

    #[error("OOV class {0} has OOV tokens but an empty member set")]
    InconsistentOov(&'static str),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

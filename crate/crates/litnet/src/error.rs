//! One error enum for the whole crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A tensor (or parameter) had the wrong shape for an operation.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A scalar argument or configuration field was out of range.
    #[error("invalid {what}: {details}")]
    Invalid { what: &'static str, details: String },

    /// Gradient-tape misuse: double backward, non-scalar loss, mixed tapes…
    #[error("autodiff error: {0}")]
    Tape(String),

    /// A trainable parameter received no gradient from `backward`.
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    /// The training loss left the reals.
    #[error("non-finite loss at step {step}: {value}")]
    NonFiniteLoss { step: u64, value: f64 },

    #[error("checkpoint magic mismatch: not a LITN checkpoint")]
    CheckpointMagic,

    #[error("checkpoint format version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    /// Truncated or otherwise undecodable checkpoint contents.
    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),

    /// The stored parameter names do not match what the config constructs.
    #[error("checkpoint parameter names do not match the model: missing {missing:?}, unexpected {unexpected:?}")]
    CheckpointNameSet {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    /// Stored element type differs from the requested one.
    #[error("checkpoint dtype mismatch for `{name}`: stored {stored}, requested {requested}")]
    CheckpointDtype {
        name: String,
        stored: &'static str,
        requested: &'static str,
    },

    #[error("image error: {0}")]
    Image(String),

    /// Prediction/ground-truth directories disagree on their file stems.
    #[error("unpaired evaluation files: {0:?}")]
    UnpairedFiles(Vec<String>),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub(crate) fn invalid(what: &'static str, details: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            details: details.into(),
        }
    }
}

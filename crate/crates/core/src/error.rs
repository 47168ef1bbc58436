use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the failure surfaces of the pipeline: provider errors
/// (context, transport, protocol), codec errors (range, desync), and
/// session errors (capacity).
#[derive(Debug, Error)]
pub enum Error {
    /// Conditioning sequence longer than the provider accepts.
    #[error("context of {got} tokens exceeds provider limit of {limit}")]
    ContextOverflow { got: usize, limit: usize },

    /// The inference endpoint could not be reached or dropped the connection.
    #[error("transport: {0}")]
    Transport(String),

    /// The inference endpoint answered with something that is not the wire protocol.
    #[error("protocol: {0}")]
    Protocol(String),

    /// Data violated an invariant (probability sums, symbol widths, config bounds).
    #[error("validation: {0}")]
    Validation(String),

    /// A rank fell outside the vocabulary. Signals a corrupted bitstream or
    /// a context mismatch between sender and receiver.
    #[error("rank {rank} out of range for vocabulary of {vocab} tokens")]
    RankOutOfRange { rank: u32, vocab: usize },

    /// Sender and receiver disagree on model, context, or configuration.
    #[error("desync: {0}")]
    Desync(String),

    /// The message does not fit in the channel under this configuration.
    #[error(
        "capacity exhausted: {embedded} of {total} symbols embedded within {max_tokens} tokens"
    )]
    CapacityExhausted {
        embedded: usize,
        total: usize,
        max_tokens: usize,
    },

    /// A model cannot be trained from the given corpus (e.g. order exceeds corpus length).
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// A caller-supplied parameter is out of its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A container file failed to parse.
    #[error("malformed {what} file: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}

use std::io;

/// Errors raised anywhere in the codec.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or image shapes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A NaN/Inf appeared, or a divisor left its valid domain.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Invalid arguments or configuration.
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed bitstream, checkpoint or config file.
    #[error("format error: {0}")]
    Format(String),
    /// The range decoder ran out of input or hit an inconsistent state.
    #[error("decode error: {0}")]
    Decode(String),
    #[error("image error: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

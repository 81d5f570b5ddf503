use thiserror::Error;

use crate::formats::FormatError;
use crate::session::ProtocolError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the operation's domain (bad index, invalid spec, singular geometry).
    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

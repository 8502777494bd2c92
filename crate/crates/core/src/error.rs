use alloc::string::String;

/// Errors raised by the index, token and verification layers.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// An argument was outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// A feature or record referenced a dimension in an unsupported way.
    #[error("schema error: {0}")]
    Schema(String),
    /// A feature name or keyword is already registered.
    #[error("feature already registered: {0}")]
    Registration(String),
    /// A feature id is not known to the index.
    #[error("unknown feature id {0}")]
    Lookup(u32),
    /// A resume token does not belong to the queried feature set.
    #[error("token mismatch: {0}")]
    Token(String),
    /// A token field does not fit its bit width.
    #[error("token field overflow: {0}")]
    TokenEncoding(String),
    /// The operation is not valid in the current forest state.
    #[error("invalid state: {0}")]
    State(String),
    /// A record violates the schema.
    #[error("ingestion error: {0}")]
    Ingestion(String),
    /// Restored parts do not describe a consistent forest.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// A wire-format buffer could not be decoded.
    #[error("decode error: {0}")]
    Decode(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! param_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Parameter(alloc::format!($($arg)*))
    };
}
pub(crate) use param_err;

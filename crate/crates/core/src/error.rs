use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the codec, container and ingestion paths can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{component} value {value} out of range (max {max})")]
    Range {
        component: &'static str,
        value: u32,
        max: u32,
    },

    #[error("exponent {symbol} is reserved for LUT pointers ({count} occurrences)")]
    ReservedSymbol { symbol: u8, count: u64 },

    #[error("malformed codebook: {0}")]
    MalformedCodebook(String),

    #[error("histogram symbol {symbol} has no codeword in the codebook")]
    Inconsistent { symbol: u8 },

    #[error("LUT hierarchy needs {needed} child tables, at most 16 are addressable (tables per depth: {profile:?})")]
    HierarchyOverflow { needed: usize, profile: Vec<usize> },

    #[error("invalid decode geometry: {0}")]
    Geometry(String),

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("block {block}: decoded {found} elements, block output positions expect {expected}")]
    MetadataMismatch {
        block: usize,
        expected: u64,
        found: u64,
    },

    #[error("bad magic: not a DF11 container")]
    BadMagic,

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),

    #[error("CRC mismatch in {section}: stored {stored:#010x}, computed {computed:#010x}")]
    Crc {
        section: String,
        stored: u32,
        computed: u32,
    },

    #[error("truncated {what}: need {needed} bytes, {available} available")]
    Truncated {
        what: String,
        needed: u64,
        available: u64,
    },

    #[error("malformed container: {0}")]
    Structure(String),

    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),

    #[error("unknown tensor {0:?}")]
    UnknownTensor(String),

    #[error("safetensors: {0}")]
    Safetensors(String),

    #[error("tensor {name:?}: {source}")]
    Tensor {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn in_tensor(self, name: &str) -> Self {
        Error::Tensor {
            name: name.to_owned(),
            source: Box::new(self),
        }
    }

    /// Strips any `Tensor { .. }` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Tensor { source, .. } => source.root(),
            other => other,
        }
    }
}

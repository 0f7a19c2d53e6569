use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, ranges, arities).
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("unsupported upsampling factor x{factor}; available: {}", fmt_factors(.available))]
    UnsupportedFactor { factor: u32, available: Vec<u32> },

    #[error("data error: {0}")]
    Data(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("bad checkpoint magic {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("non-finite loss at iteration {iteration} (factor x{factor}, lr {lr:e})")]
    NonFinite { iteration: usize, factor: u32, lr: f64 },

    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_factors(factors: &[u32]) -> String {
    factors.iter().map(|f| format!("x{f}")).collect::<Vec<_>>().join(", ")
}

impl Error {
    pub fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the error class: 2 config, 3 data, 4 numeric, 5 capability.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Contract { .. } => 2,
            Error::Data(_)
            | Error::Format { .. }
            | Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::Truncated { .. }
            | Error::Io { .. } => 3,
            Error::NonFinite { .. } => 4,
            Error::UnsupportedFactor { .. } => 5,
        }
    }
}

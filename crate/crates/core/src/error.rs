use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("incompatible sketches: {0}")]
    Incompatible(String),

    #[error("counter overflow in bucket {0}")]
    Overflow(usize),

    #[error("sketch parse error: {0}")]
    Parse(#[from] ParseError),

    /// The exact PYP path refuses sketches above its size cap.
    #[error("sample size {n} exceeds the exact-mode cap {cap}; use the Monte Carlo method instead")]
    ExactCapExceeded { n: u64, cap: u64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    BadVersion(u8),
    #[error("truncated input: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("invalid header field: {0}")]
    InvalidField(&'static str),
    #[error("counts sum to {sum} but header says n = {n}")]
    CountMismatch { sum: u64, n: u64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

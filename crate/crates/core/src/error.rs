use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains a non-finite value")]
    NonFinite,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("auto-calibration region is not fully acquired")]
    AcrNotAcquired,

    #[error("kernel does not fit inside the auto-calibration region")]
    KernelTooLarge,

    #[error("no calibration weights for kernel class {0}")]
    MissingWeights(usize),

    #[error("missing AUTO-SMASH weights for shift m={0}")]
    MissingShiftWeights(usize),

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    #[error("bad magic bytes in tensor container")]
    BadMagic,

    #[error("unsupported tensor container version {0}")]
    UnsupportedVersion(u16),

    #[error("unsupported tensor dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("tensor payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("tensor dimensions overflow: {0}")]
    DimOverflow(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

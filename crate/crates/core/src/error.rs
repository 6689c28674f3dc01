use alloc::string::String;

/// Argument and contract violations raised by the pure operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty bit segment")]
    EmptySegment,
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid block length {block} for key length {len}")]
    InvalidBlockLength { block: usize, len: usize },
    #[error("{0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("invalid LFSR seed {seed} for width {width}")]
    InvalidSeed { seed: u64, width: u32 },
    #[error("no primitive polynomial shipped for width {0}")]
    UnsupportedWidth(u32),
    #[error("feedback polynomial {taps:#x} is not primitive for width {width}")]
    NonPrimitiveTaps { taps: u64, width: u32 },
    #[error("error rate {0} outside the open interval (0, 0.5)")]
    InvalidErrorRate(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{op}: input {found:?} is smaller than the minimum {min:?}")]
    TooSmall {
        op: &'static str,
        min: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: non-finite value in input")]
    NonFinite { op: &'static str },
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("label {0} is not a class index in 0..3")]
    InvalidLabel(usize),
    #[error("label vector is not one-hot: {0:?}")]
    NotOneHot(Vec<f64>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("truncated data: {section} needs {missing} more byte(s)")]
    Truncated { section: &'static str, missing: usize },
    #[error("{0} trailing byte(s) after end of data")]
    TrailingBytes(usize),
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error("model is not trained: {0}")]
    Untrained(&'static str),
}

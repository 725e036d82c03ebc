use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("insufficient coverage: {0}")]
    Coverage(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("value not on the sample lattice: {0}")]
    Quantization(String),
    #[error("unsupported window: {0}")]
    UnsupportedWindow(String),
    #[error("crystallization condition violated: {0}")]
    Crystallization(String),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("surface is not quasi-periodic: {0}")]
    NotQuasiPeriodic(String),
    #[error("channel is not on the integer DD lattice: {0}")]
    NonIntegerChannel(String),
    #[error("too few samples: {0}")]
    InsufficientSamples(String),
}

pub type Result<T> = std::result::Result<T, Error>;

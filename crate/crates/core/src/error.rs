use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix or vector contains a non-finite entry")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("kernel entry underflowed (min {min:e}); temperature {temperature} is outside the supported range")]
    NumericUnderflow { temperature: f64, min: f64 },

    #[error("entry ({row}, {col}) = {value} is not strictly positive")]
    NotPositive { row: usize, col: usize, value: f64 },

    #[error("matrix is not doubly stochastic (max deviation {deviation:e} > tolerance {tol:e})")]
    NotDoublyStochastic { deviation: f64, tol: f64 },

    #[error("restricted norm {restricted} disagrees with second singular value {second}")]
    SpectralMismatch { restricted: f64, second: f64 },

    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),

    #[error("layer norm is undefined for an input with no detail component")]
    DegenerateInput,

    #[error("zero vector where a non-zero vector is required")]
    ZeroVector,

    #[error("noise scale is zero; SNR is undefined")]
    ZeroNoise,

    #[error("sphere sampling produced a zero projection {attempts} times in a row")]
    ResampleExhausted { attempts: usize },

    #[error("invalid dimension {n}: {reason}")]
    InvalidDimension { n: usize, reason: &'static str },

    #[error("gamma = {0} exceeds 1/8; the low-SNR hypothesis does not hold")]
    HighSnr(f64),

    #[error("singular value gap {gap:e} is too small relative to sigma_1 = {sigma1:e}")]
    ZeroGap { gap: f64, sigma1: f64 },

    #[error("no temperature in the grid reaches the SNR target ({0})")]
    SnrTargetUnreachable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for violated invariants, 3 for I/O, 4 for configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Csv(_) => 3,
            Error::Config(_) | Error::Parse(_) | Error::InvalidParameter(_) | Error::InvalidEpsilon(_) => 4,
            _ => 2,
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: |H - H^dagger| = {defect:.3e} at ({row}, {col})")]
    NotHermitian { defect: f64, row: usize, col: usize },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("expected {expected} control channel(s), got {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("all superposition amplitudes are zero")]
    ZeroAmplitudes,

    #[error("eigendecomposition failed to converge")]
    Eigen,

    #[error("frozen-density fixed point did not converge at step {step} (residual {residual:.3e})")]
    FixedPoint { step: usize, residual: f64 },
}

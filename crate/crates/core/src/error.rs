use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not unitary (max |U^dag U - I| = {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    #[error("matrix is not Hermitian (max |A - A^dag| = {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("dimension {0} exceeds the supported maximum of 2^20")]
    DimTooLarge(usize),

    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("entry count {entries} does not match {rows}x{cols}")]
    Shape { rows: usize, cols: usize, entries: usize },

    #[error("state is not normalised (norm^2 = {0})")]
    NotNormalised(f64),

    #[error("not a density operator: {0}")]
    NotDensity(String),

    #[error("qubit index {index} invalid for a {qubits}-qubit register")]
    BadIndex { index: usize, qubits: usize },

    #[error("noise parameter p = {0} outside [0, 1]")]
    POutOfRange(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown detector `{0}`")]
    UnknownDetector(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("both arms must be conclusive to compute a speed-up")]
    Inconclusive,
}

pub type Result<T> = std::result::Result<T, Error>;

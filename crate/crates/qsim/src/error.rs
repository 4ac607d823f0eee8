use thiserror::Error;

#[derive(Debug, Error)]
pub enum QsimError {
    #[error("unknown register {0:?}")]
    UnknownRegister(String),
    #[error("duplicate register name {0:?}")]
    DuplicateRegister(String),
    #[error("bit index {index} out of range for register {register:?} of width {width}")]
    BitIndexOutOfRange {
        register: String,
        index: usize,
        width: usize,
    },
    #[error("basis string length {got} does not match layout width {want}")]
    BasisLengthMismatch { got: usize, want: usize },
    #[error("state is not normalized (|Σ|amp|² − 1| = {0:.3e})")]
    NotNormalized(f64),
    #[error("density matrix dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("kept width {0} exceeds dense capacity of {1} qubits")]
    CapacityExceeded(usize, usize),
    #[error("register width must be ≥ 1")]
    EmptyRegister,
    #[error("oracle output register not XOR-safe: {0}")]
    OracleContract(String),
    #[error("cannot drop register {0:?}: it is not in a constant basis state")]
    DropEntangled(String),
    #[error("invalid serialized state: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, QsimError>;

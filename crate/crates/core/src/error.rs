use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("orbital index {index} out of range for {orbitals} orbitals")]
    OrbitalOutOfRange { index: usize, orbitals: usize },

    #[error("orbital list must be strictly increasing, got {0:?}")]
    UnsortedOrbitals(Vec<usize>),

    #[error("{orbitals} orbitals exceed the dense representation cap of {cap}")]
    DenseCapExceeded { orbitals: usize, cap: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("matrix is not antisymmetric (deviation {0:.3e})")]
    NotAntisymmetric(f64),

    #[error("integrals violate the required symmetry: {0}")]
    Symmetry(String),

    #[error("invalid bond dimensions: {0}")]
    BondDims(String),

    #[error("state is zero")]
    ZeroState,

    #[error("state has weight {0:.3e} outside the two-particle sector")]
    NotTwoParticle(f64),

    #[error("one-particle density matrix has rank {rank}, expected {expected}")]
    DeficientRdm { rank: usize, expected: usize },

    #[error("odd length {0}; an even number of orbitals is required")]
    OddLength(usize),

    #[error("need at least {needed} pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },

    #[error("requested {requested} levels but the sector has dimension {available}")]
    TooManyLevels { requested: usize, available: usize },

    #[error("FCIDUMP parse error (line {line}): {msg}")]
    Fcidump { line: usize, msg: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid form: {0}")]
    InvalidForm(String),
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("scale exceeded: {0}")]
    Scale(String),
    #[error("bad prime {0}: {1}")]
    BadPrime(u64, String),
    #[error("zero input: {0}")]
    ZeroInput(String),
    #[error("vector not in the lattice row span")]
    NotInLattice,
    #[error("inadmissible (c, p): {0}")]
    Inadmissible(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

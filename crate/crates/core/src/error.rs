use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("point outside [-1,1]^d: coordinate {coord} = {value}")]
    OutOfCube { coord: usize, value: f64 },

    #[error("degree {requested} exceeds basis max degree {max}")]
    DegreeTooHigh { requested: usize, max: usize },

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

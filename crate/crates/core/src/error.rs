use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("rotation angle {0} outside [-45, 45] degrees")]
    AngleOutOfRange(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no periodic structure in marginal")]
    NoPeriodicStructure,

    #[error("architecture string {spec:?}: {reason}")]
    Architecture { spec: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("no path from source to sink")]
    NoPath,

    #[error("brute-force budget exceeded: {0} combinations")]
    BudgetExceeded(u128),
}

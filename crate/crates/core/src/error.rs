use thiserror::Error;

use crate::lattice::Cube;

#[derive(Debug, Error)]
pub enum Error {
    #[error("top level {top} must be strictly above leaf level {leaf}")]
    LevelInversion { top: i32, leaf: i32 },

    #[error("lattice needs at least one root cube")]
    NoRoots,

    #[error("root {0:?} is not at the top level")]
    RootLevel(Cube),

    #[error("roots {0:?} and {1:?} overlap")]
    OverlappingRoots(Cube, Cube),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension must be positive and at most {max}, got {got}")]
    BadDimension { got: usize, max: usize },

    #[error("lattice with {0} leaves exceeds the supported size")]
    TooLarge(u128),

    #[error("objects live on different lattices")]
    LatticeMismatch,

    #[error("cube {0:?} is not in the active lattice")]
    Inactive(Cube),

    #[error("cube {0:?} is a leaf and has no children in the lattice")]
    LeafCube(Cube),

    #[error("cube {0:?} is finer than the leaf resolution")]
    Unresolved(Cube),

    #[error("expected {expected} leaf values, got {got}")]
    LeafCount { expected: usize, got: usize },

    #[error("leaf mass {value} at index {index} is negative or not finite")]
    BadMass { index: usize, value: f64 },

    #[error("entry between {out} and {input} has tree distance beyond radius {radius}")]
    OutOfBand {
        out: String,
        input: String,
        radius: u32,
    },

    #[error("Haar component {component} out of range for dimension {dim}")]
    BadComponent { component: usize, dim: usize },

    #[error("the Haar shift is only defined in dimension 1, got {0}")]
    ShiftDimension(usize),

    #[error("lattice depth {depth} must exceed radius {radius}")]
    DepthTooShallow { depth: u32, radius: u32 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

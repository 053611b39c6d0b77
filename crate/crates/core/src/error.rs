use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },

    #[error("truncated payload at byte {offset}: needed {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("dimension overflow at byte {offset}: {nx}x{ny}x{nz} voxels")]
    DimensionOverflow {
        offset: usize,
        nx: u64,
        ny: u64,
        nz: u64,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mask selects no voxels")]
    EmptyMask,

    #[error("degenerate intensity range: every masked voxel equals {0}")]
    DegenerateRange(f64),

    #[error("no patch center is shared by two or more subjects")]
    NoSharedCenters,

    #[error("layer stack is empty")]
    EmptyStack,

    #[error("representation norm {norm:e} is below the cosine guard")]
    DegenerateCosine { norm: f64 },

    #[error("median pairwise distance is zero")]
    DegenerateSpread,

    #[error("non-finite value in input")]
    NonFinite,

    #[error("classifier bank is empty")]
    EmptyBank,

    #[error("subject shares no centers with the classifier bank")]
    NoOverlap,

    #[error("distance map has no valid scores")]
    EmptyMap,

    #[error("config error: {0}")]
    Config(String),
}

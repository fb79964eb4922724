use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("voxel index {index:?} out of range for dims {dims:?}")]
    IndexOutOfRange { index: [usize; 3], dims: [usize; 3] },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The exact search would have to score more query/key pairs than the
    /// configured budget allows.
    #[error(
        "exact nearest-neighbor search needs {required} query/key pairs, above the budget of \
         {budget}; use the approximate (PatchMatch) search at this scale"
    )]
    Capacity { required: u128, budget: u64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

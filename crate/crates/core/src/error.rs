use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration rejected before any simulation starts.
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("operation requires d = 2, got d = {0}")]
    UnsupportedDimension(usize),

    /// The blocked directions positively span the plane; no legal walk state looks like this.
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("rejection sampler stalled after {cap} proposals")]
    SamplerStall { cap: u32 },

    #[error("split sampler stalled after {proposals} residual proposals")]
    SplitSamplerStall { proposals: u64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("insufficient renewals: need at least {needed}, got {got}")]
    InsufficientRenewals { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed record: {0}")]
    Format(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("patch side {side} does not fit in a {width}x{height} image")]
    PatchTooLarge { side: usize, width: usize, height: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("requested {k} clusters but the dataset holds only {count} patches")]
    TooManyClusters { k: usize, count: usize },

    #[error("cluster {k} out of range (K = {clusters})")]
    InvalidCluster { k: usize, clusters: usize },

    #[error("noise standard deviation must be positive, got {0}")]
    InvalidSigma(f64),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("proposal scores must be non-negative, got {0}")]
    NegativeScore(f64),

    #[error("sample drawn from cluster {k}, whose proposal weight is zero")]
    ZeroProposalWeight { k: usize },

    #[error("every importance weight is zero (proposal weights {alpha:?})")]
    AllWeightsZero { alpha: Vec<f64> },

    #[error(
        "patch at ({row}, {col}) still has no non-zero weight after {escalations} \
         sigma escalations (last sigma {sigma})"
    )]
    EscalationExhausted { row: usize, col: usize, escalations: u32, sigma: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

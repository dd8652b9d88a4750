use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column {0} has zero norm")]
    ZeroColumn(usize),

    #[error("requested {n} users but at most {bound} are supported with {m} chips")]
    BoundExceeded { m: usize, n: usize, bound: usize },

    #[error("{0} users is too many for exhaustive search")]
    TooLarge(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty observation batch")]
    EmptyBatch,

    #[error("model covariance is numerically singular")]
    SingularModel,

    #[error("powers are not identifiable: row-product rank {rank} < {n} users")]
    NotIdentifiable { rank: usize, n: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("stacked decoded-signature matrix has rank {rank} < {n}")]
    RankDeficientStack { rank: usize, n: usize },

    #[error("signature matrix has rank {rank} < {m}; no invertible m x m block")]
    NoInvertibleBlock { rank: usize, m: usize },

    #[error("{0} free bits exceeds the exhaustive decoder limit")]
    TooManyFreeBits(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad configuration or input, as opposed to
    /// numerical failures during a run.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::ZeroColumn(_)
                | Error::BoundExceeded { .. }
                | Error::TooLarge(_)
                | Error::DimensionMismatch(_)
                | Error::Parse { .. }
                | Error::InvalidArgument(_)
                | Error::TooManyFreeBits(_)
                | Error::NotIdentifiable { .. }
                | Error::NoInvertibleBlock { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid interval [{start}, {end}]: start must be below end")]
    InvalidInterval { start: f64, end: f64 },

    /// The integrator input `b + r(t)` is not strictly positive.
    #[error("bias {bias} does not exceed the signal peak {peak}")]
    BiasTooSmall { bias: f64, peak: f64 },

    #[error("observation window is empty")]
    EmptyWindow,

    #[error("need at least 2 pilot firings, found {found}")]
    InsufficientPilotSpikes { found: usize },

    #[error("no firing before the data window start to anchor the first data interval")]
    InsufficientDataAnchor,

    #[error("invalid firing record: {0}")]
    InvalidFiringRecord(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Carries the condition estimate of the weighted normal matrix (infinite when
    /// there are fewer equations than unknowns).
    #[error("detection system is rank deficient (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("exhaustive search over {size} candidates exceeds the limit of {limit}")]
    SearchSpaceTooLarge { size: f64, limit: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

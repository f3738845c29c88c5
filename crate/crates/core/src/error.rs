use thiserror::Error;

/// Errors surfaced by the solver and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("nonfinite input in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("barrier domain violated: slack component {index} is {value:.3e}")]
    BarrierDomain { index: usize, value: f64 },

    #[error("KKT matrix could not be corrected: diagonal shift {0:.3e} exceeded the limit")]
    ShiftExhausted(f64),

    #[error("line search exhausted {0} halvings; the noise relaxation appears misconfigured")]
    LineSearchStalled(u32),

    #[error("unknown problem '{0}'")]
    UnknownProblem(String),

    #[error("unknown measure '{0}'")]
    UnknownMeasure(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

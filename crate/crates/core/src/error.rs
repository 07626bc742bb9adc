use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    /// A caller broke an API contract (non-scalar loss, missing gradient, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{op} needs at least 2 samples in train mode, got {got}")]
    BatchTooSmall { op: &'static str, got: usize },

    /// A computation produced NaN or infinity.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate singular spectrum: all values are zero")]
    DegenerateSpectrum,

    #[error("dataset too large: {0} rows exceeds the 10^7 limit")]
    Size(usize),

    #[error("metric {metric} undefined: {reason}")]
    MetricUndefined {
        metric: &'static str,
        reason: String,
    },

    #[error("malformed file at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unsupported {what} version {found} (expected {expected})")]
    UnsupportedVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn undefined(metric: &'static str, reason: impl Into<String>) -> Self {
        Error::MetricUndefined {
            metric,
            reason: reason.into(),
        }
    }
}

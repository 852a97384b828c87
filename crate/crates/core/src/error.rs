use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid disorder law: {0}")]
    InvalidLaw(String),

    #[error("law has no upper bound K; {0} requires a bounded-above environment")]
    UnsupportedLaw(&'static str),

    #[error("walk leaves the box: need radius {needed}, have {radius}")]
    BoxOverflow { needed: i64, radius: i64 },

    #[error("capacity exceeded: {what} needs {needed}, limit {limit}")]
    Capacity {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("grid infeasible at n = {n}: {reason}; smallest feasible n is {min_feasible:?}")]
    GridInfeasible {
        n: u64,
        reason: String,
        min_feasible: Option<u64>,
    },

    #[error("no L2-critical point: {0}")]
    NoCriticalPoint(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

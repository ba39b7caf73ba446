use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    /// The drift is not in the range of the covariance: no numeraire
    /// portfolio exists and arbitrage of the first kind is possible.
    #[error("no viability: drift has a component of norm {residual:e} outside the covariance range")]
    NoViability { residual: f64 },

    /// Growth rate is zero, so the numeraire never diverges and its overall
    /// minimum time is not almost surely finite.
    #[error("discounting process is not asymptotically suboptimal (growth rate {0})")]
    NotSuboptimal(f64),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("path index {index} out of range for {n_paths} paths")]
    PathIndex { index: u64, n_paths: u64 },

    #[error("time {0} is not on the simulation grid")]
    OffGrid(f64),

    #[error("no path among {n_paths} reaches level u = {u}")]
    DegenerateEnsemble { u: f64, n_paths: usize },

    #[error("invalid alternative deflator: {0}")]
    InvalidDeflator(String),
}

pub type Result<T> = std::result::Result<T, Error>;

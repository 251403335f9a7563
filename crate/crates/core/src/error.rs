use thiserror::Error;

use crate::hybrid::HybridTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The flow produced a NaN or infinite value.
    #[error("numerical failure at t = {t}: non-finite state {state:?}")]
    NumericalFailure {
        t: f64,
        state: Vec<f64>,
        /// Trace up to the last finite sample, when the failure happened inside `simulate`.
        partial: Option<Box<HybridTrace>>,
    },

    #[error("invalid guard bracket: residual {lo} at t_lo, {hi} at t_hi (need lo < 0 <= hi)")]
    InvalidBracket { lo: f64, hi: f64 },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A stability design inequality does not hold. `inequality` names it.
    #[error("infeasible design: {inequality} ({detail})")]
    Design { inequality: String, detail: String },

    #[error("state is zero: the solution never spikes again")]
    NoSpike,

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn design(inequality: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Design {
            inequality: inequality.into(),
            detail: detail.into(),
        }
    }
}

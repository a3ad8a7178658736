use crate::model::Edge;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A positively-weighted pair sits at (or numerically below) zero
    /// separation where a functional diverges.
    #[error("singular state: {0}")]
    SingularState(String),

    #[error("numerical blowup at t = {time}: {detail}")]
    NumericalBlowup { time: f64, detail: String },

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Aggregated per-path failures from a Monte Carlo run.
    #[error("{} of {total} paths failed (first: path {}: {})",
            failures.len(), failures[0].0, failures[0].1)]
    PathFailures {
        total: u64,
        failures: Vec<(u64, String)>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn singular_edge(edge: Edge, what: &str) -> Self {
        Error::SingularState(format!("edge {edge} at zero separation while evaluating {what}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

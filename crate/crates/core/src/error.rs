use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("preprocessing removed every node")]
    EmptyNetwork,
    #[error("index out of range: {what} = {index} (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("degenerate rate: {0}")]
    DegenerateRate(String),
    #[error("degenerate evidence for pair ({i}, {j}): both hypotheses have zero likelihood")]
    DegenerateEvidence { i: usize, j: usize },
    #[error("calibration infeasible: {0}")]
    Calibration(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("injection failed: {0}")]
    Injection(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by how the tool was invoked rather than by the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

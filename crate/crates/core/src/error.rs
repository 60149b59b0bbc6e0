use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed graph query: unknown node, invalid path, overlapping role sets.
    #[error("query error: {0}")]
    Query(String),
    /// Invalid model, dataset or training configuration.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Counterfactual replay needs the exogenous draws retained at generation time.
    #[error("replay error: {0}")]
    Replay(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Query(_) | Error::Config(_) | Error::Dimension(_) | Error::Json(_)
        )
    }
}

pub(crate) fn query<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Query(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

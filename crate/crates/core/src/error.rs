use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("alignment error in sentence `{sent_id}`, token {index}: {message}")]
    Alignment {
        sent_id: String,
        index: usize,
        message: String,
    },

    #[error("table `{table}`, row {row}: {message}")]
    Table {
        table: String,
        row: usize,
        message: String,
    },

    #[error("column `{column}` cannot be z-scaled: {reason}")]
    Scaling { column: String, reason: String },

    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("no observations: {0}")]
    EmptySubset(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

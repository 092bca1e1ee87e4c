use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid score for team {team} at line {line}: {value}")]
    InvalidScore { team: String, line: usize, value: f64 },

    #[error("degenerate subsequence (zero standard deviation) at window offset {offset}")]
    DegenerateSubsequence { offset: usize, window: Vec<f64> },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("moment fit out of domain: c = m2/(2 m1^2) = {c}")]
    FitOutOfDomain { c: f64 },

    #[error("ill-conditioned polynomial basis: Gram residual {residual:.3e} (try a lower degree or a higher quadrature order)")]
    IllConditioned { residual: f64 },

    #[error("degenerate least-squares fit of degree {degree}: {message}")]
    DegenerateFit { degree: usize, message: String },

    #[error("spectrum span {span:.4} too short; largest usable argument is {max_usable:.4}")]
    SpanTooShort { span: f64, max_usable: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

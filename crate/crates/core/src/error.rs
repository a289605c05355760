use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A closed-form evaluation overflowed or produced a non-finite value.
    #[error("numeric overflow in {op} (theta = {theta}, inputs = {inputs:?})")]
    NumericOverflow {
        op: &'static str,
        theta: f64,
        inputs: Vec<f64>,
    },

    /// The likelihood contribution of one study could not be evaluated.
    #[error("likelihood evaluation failed for study {study}: {reason}")]
    Evaluation { study: usize, reason: String },

    /// Two models produced identical per-study contributions.
    #[error("degenerate comparison: {0}")]
    Degenerate(String),

    /// The requested computation exceeds the supported size budget.
    #[error("size budget exceeded: {0}")]
    Size(String),

    /// Input data failed validation.
    #[error("validation error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { line: Option<usize>, msg: String },

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

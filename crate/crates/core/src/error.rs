use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A theorem precondition or parameter constraint does not hold.
    #[error("infeasible configuration: {constraint} ({detail})")]
    Infeasible { constraint: String, detail: String },

    #[error("unsupported distribution: {0}")]
    UnsupportedDistribution(String),

    #[error("training diverged at t={t}: dist_sq={dist_sq:e} exceeds {threshold:e}")]
    Divergence { t: usize, dist_sq: f64, threshold: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn infeasible(constraint: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Infeasible { constraint: constraint.into(), detail: detail.into() }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    /// Process exit code for the CLI: 1 for configuration problems, 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible { .. }
            | Error::Config { .. }
            | Error::UnsupportedDistribution(_)
            | Error::InvalidDimension(_)
            | Error::Shape { .. }
            | Error::Io(_) => 1,
            Error::Domain(_)
            | Error::Numeric(_)
            | Error::Divergence { .. } => 2,
        }
    }
}

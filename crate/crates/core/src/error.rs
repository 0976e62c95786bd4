use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A load control (stretch or shear amount) outside the admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An exponential or power term left the representable range.
    #[error("overflow in term {term}: argument {argument}")]
    Overflow { term: usize, argument: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("optimizer diverged at epoch {epoch}: loss became non-finite")]
    Divergence {
        epoch: usize,
        /// Last parameter vector with a finite loss, flattened as in `ParamVector::to_free`.
        last_finite: Vec<f64>,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error on line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

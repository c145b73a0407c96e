use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{function}: argument {value} is outside the domain ({requirement})")]
    Domain {
        function: &'static str,
        value: f64,
        requirement: &'static str,
    },

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite even with diagonal jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("bessel_k overflowed at nu = {nu}, x = {x}")]
    Overflow { nu: f64, x: f64 },

    #[error("covariance is singular; offending coordinates {0:?}")]
    SingularCovariance(Vec<usize>),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

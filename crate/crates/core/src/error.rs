use thiserror::Error;

/// Errors raised by the solvers.
///
/// Numeric payloads are carried as `f64` regardless of the scalar type the
/// failing routine ran with, so the enum stays non-generic.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("energy {requested} exceeds the shell table cutoff {cutoff}; rebuild the table with a larger cutoff")]
    OutOfRange { requested: f64, cutoff: f64 },

    #[error("shell table up to n = {n_max} needs {bytes} bytes, over the memory budget of {budget} bytes")]
    Resource { n_max: u64, bytes: u64, budget: u64 },

    #[error("z = {z} lies on the lattice shell s = {shell}")]
    Pole { z: f64, shell: f64 },

    #[error("precision lost: {0}")]
    Precision(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("cache i/o: {0}")]
    Cache(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps `self` with the name of the pipeline stage that produced it.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage labels peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} refused for {sites} sites (cap is {cap})")]
    TooManySites {
        what: &'static str,
        sites: usize,
        cap: usize,
    },

    #[error("sketch matrix at cut {cut} is numerically rank zero")]
    RankZero { cut: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported lattice: {0}")]
    UnsupportedLattice(String),

    #[error("zero overlap with the trial wavefunction")]
    ZeroOverlap,

    #[error("zero total weight in the walker ensemble")]
    ZeroWeight,

    #[error("all {walkers} walkers are dead ({context})")]
    AllWalkersDead { walkers: usize, context: String },

    #[error("too few samples for error analysis: {0}")]
    TooFewSamples(usize),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::InvalidInput(_) | Error::UnsupportedLattice(_)
        )
    }
}

use thiserror::Error;

/// Errors raised by the exchangeable transport library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("no density: {0}")]
    NoDensity(&'static str),

    /// Potential tails do not decay, so the law has no finite second moment.
    #[error("non-integrable tail: {0}")]
    NonIntegrable(String),

    #[error("source has atoms; Monge map may not exist")]
    AtomicSource,

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{side} potential bound violated: required {required}, found {found}")]
    PotentialBound {
        side: PotentialSide,
        required: f64,
        found: f64,
    },

    #[error("entropic solver did not converge after {iterations} iterations (marginal residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("row outside all supports")]
    OutsideSupport,

    #[error("covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("potential is not quadratic; use grid_hessian_modulus for general potentials")]
    NonQuadraticPotential,

    #[error("density underflow at {0:?}")]
    DensityUnderflow(Vec<f64>),

    #[error("mode mismatch: {0}")]
    ModeMismatch(&'static str),
}

/// Which side of the Caffarelli hypothesis failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialSide {
    /// Source potential Hessian exceeds the supplied upper bound.
    SourceUpper,
    /// Target potential Hessian falls below the supplied lower bound.
    TargetLower,
}

impl std::fmt::Display for PotentialSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PotentialSide::SourceUpper => f.write_str("source upper"),
            PotentialSide::TargetLower => f.write_str("target lower"),
        }
    }
}

impl Error {
    /// True for errors caused by malformed or out-of-range inputs, as opposed
    /// to numerical failures inside a solver.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::NotConverged { .. } | Error::Solver(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

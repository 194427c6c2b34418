use thiserror::Error;

/// Errors raised across the library. Each variant maps to one failure class of
/// the public operations; the CLI turns them into exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("domain is not admissible: distance to the half-disk boundary {distance:.6} is below {delta_min}")]
    NotAdmissible { distance: f64, delta_min: f64 },

    #[error("evaluation overflow at term index {index} (log-magnitude {log_magnitude:.1})")]
    Overflow { index: usize, log_magnitude: f64 },

    #[error("argument outside the valid region: {0}")]
    OutOfDomain(String),

    #[error("{what} = {value} is out of range (max {max})")]
    Range { what: &'static str, value: usize, max: usize },

    #[error("matrix dimension {0} is not even")]
    OddDimension(usize),

    #[error("matrix is not skew-symmetric: |M + M^T| reaches {0:e}")]
    NotSkew(f64),

    #[error("matrix violates the checkerboard zero pattern: |M_ij| reaches {0:e} with i = j mod 2")]
    Structure(f64),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("error estimate {estimate:e} exceeds target {target:e}; try resolution >= {recommended}")]
    Accuracy { estimate: f64, target: f64, recommended: f64 },

    #[error("radial profile rejected: {0}")]
    Profile(String),

    #[error("ill-conditioned solve (condition estimate {0:e})")]
    Conditioning(f64),

    #[error("eigensolver failed for sample seed {seed}: {reason}")]
    Solver { seed: u64, reason: String },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("{failed} of {total} samples failed, above the abort threshold")]
    TooManyFailures { failed: usize, total: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter point {0} lies outside the parameter domain")]
    OutsideDomain(String),

    #[error("Monte Carlo expectation requested for family `{0}` which has no sampler")]
    NoSampler(String),

    #[error("exact enumeration requested for family `{0}` whose support is not finite")]
    NotEnumerable(String),

    #[error("log-density is not finite in the finite-difference stencil at {0}")]
    NonFiniteLogDensity(String),

    #[error("nuisance information block is singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularNuisance { min_eigenvalue: f64 },

    #[error("matrix is not positive definite: eigenvalues {eigenvalues:?}")]
    NotPositiveDefinite { eigenvalues: Vec<f64> },

    #[error("score-equation violation for `{label}`: direct and covariance routes differ by {discrepancy:e}")]
    ScoreEquationViolation { label: String, discrepancy: f64 },

    #[error("degenerate sample variance for `{0}`")]
    DegenerateVariance(String),

    #[error("nuisance value {value} is infeasible (must lie in (0, {total}))")]
    InfeasibleNuisance { value: f64, total: f64 },

    #[error("{0} failed to converge")]
    NoConvergence(String),

    #[error("too many failed replications: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

use thiserror::Error;

/// Problems found while validating a [`crate::model::SpinModel`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("n_sites must be at least 1")]
    NoSites,
    #[error("spin_s = {0} is not a positive half-integer")]
    NonHalfIntegerSpin(f64),
    #[error("site index {site} out of range for a model with {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },
    #[error("negative rate {rate} in {term} term")]
    NegativeRate { term: &'static str, rate: f64 },
    #[error("non-finite coefficient in {0} term")]
    NonFiniteCoefficient(&'static str),
    #[error("bond ({0}, {1}) wraps around an open boundary")]
    WrapAroundBond(usize, usize),
    #[error("bond couples site {0} to itself")]
    SelfBond(usize),
}

/// Errors raised while assembling or running the stochastic ensemble.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("interaction terms require the Wigner distribution (k = 0); got k = {0}")]
    InteractionNeedsWigner(i8),
    #[error("invalid integrator setting: {0}")]
    InvalidIntegrator(String),
    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),
}

/// Errors raised by the exact master-equation solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("Hilbert-space dimension {dim} exceeds the exact-solver limit {limit}")]
    DimensionLimit { dim: usize, limit: usize },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("density-matrix invariant violated at t = {t}: {what}")]
    InvariantViolated { t: f64, what: String },
    #[error("steady state did not converge: residual {residual:e} after t = {t}")]
    NoConvergence { residual: f64, t: f64 },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("{0}")]
    Unsupported(String),
}

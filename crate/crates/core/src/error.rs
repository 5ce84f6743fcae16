use thiserror::Error;

/// Errors raised while building or evaluating the model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("negative argument {value} passed to {what}")]
    NegativeArgument { what: &'static str, value: f64 },
    #[error("density must be nonnegative and finite (cell {cell}: {value})")]
    InvalidDensity { cell: usize, value: f64 },
    #[error("grid mismatch: expected {expected} cells, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("angular quadrature did not converge at r={r}, s={s} (error estimate {estimate:e})")]
    QuadratureNonconvergence { r: f64, s: f64, estimate: f64 },
    #[error("malformed expression at column {column}: {reason}")]
    Expression { column: usize, reason: String },
}

/// Errors raised by the time integrators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("time step {dt:e} exceeds the stability limit; retry with dt <= {suggested:e}")]
    Cfl { dt: f64, suggested: f64 },
    #[error("Newton iteration stalled after {iterations} iterations (residual {residual:e})")]
    Newton { iterations: usize, residual: f64 },
    #[error("drift fixed point did not converge in {iterations} iterations (last residual {residual:e})")]
    Picard { iterations: usize, residual: f64 },
    #[error("step {step} at t={t} failed after {retries} dt halvings: {source}")]
    RetriesExhausted {
        step: usize,
        t: f64,
        retries: usize,
        source: Box<SolverError>,
    },
    #[error("trajectories are not comparable: {0}")]
    Mismatch(String),
}

/// Errors raised by the stationary solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StationaryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("h={h} makes the profile base nonpositive at r={r}")]
    InfeasibleH { h: f64, r: f64 },
    #[error("profile fixed point did not converge; residual history tail {history:?}")]
    FixedPoint { history: Vec<f64> },
    #[error("could not bracket the mass constraint: {0}")]
    Bracket(String),
    #[error("the reduction requires a quadratic interaction kernel")]
    NotQuadratic,
}

pub type ModelResult<T> = Result<T, ModelError>;

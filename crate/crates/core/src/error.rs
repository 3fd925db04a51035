use thiserror::Error;

/// Errors raised by the solver, the measure reconstruction and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function being evaluated.
    #[error("domain error: {0}")]
    Domain(String),
    /// Model inputs or solver settings cannot be used as given.
    #[error("configuration error: {0}")]
    Config(String),
    /// An iteration did not reach its tolerance.
    #[error("divergence: {message} (last residual {residual:e})")]
    Divergence { message: String, residual: f64 },
    /// Elapsed-time initial data cannot be mapped to the residual-time form.
    #[error("correspondence error: {0}")]
    Correspondence(String),
    /// A derived quantity violates a structural property beyond tolerance.
    #[error("internal consistency error: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;

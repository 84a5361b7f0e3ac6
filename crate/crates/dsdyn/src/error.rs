//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    #[error("non-finite state: {0}")]
    NonFiniteState(String),

    #[error("saturation condition violated: beta1 * p_d^2 = {0} must exceed 1")]
    SaturationCondition(f64),

    #[error("model does not reduce to the planar form: {0}")]
    Reduction(String),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("no simple roots: |a| = {a_abs} does not exceed the critical amplitude {threshold}")]
    NoSimpleRoots { a_abs: f64, threshold: f64 },

    #[error("cycle refinement did not converge after {steps} steps (last residual {residual:e})")]
    RefinementFailed { steps: usize, residual: f64 },

    #[error("basin map holds a single class; the boundary set is empty")]
    DegenerateBoundary,

    #[error("malformed basin CSV: {0}")]
    MalformedCsv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

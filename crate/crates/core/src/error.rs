use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ellipticity bound violated at x = {x}: a(x) = {value} not in [{lower}, {upper}]")]
    Ellipticity {
        x: f64,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite state after {stage} at step {step}, node {node}")]
    NonFinite {
        stage: &'static str,
        step: usize,
        node: usize,
    },

    #[error("obstacle above initial data at node {node}: S = {obstacle}, xi = {initial}")]
    IncompatibleObstacle {
        node: usize,
        obstacle: f64,
        initial: f64,
    },

    #[error("contraction property fails: 2*alpha + beta^2 = {lhs} >= 2*lambda = {rhs}")]
    Contraction { lhs: f64, rhs: f64 },

    #[error("comparison hypothesis `{hypothesis}` fails at step {step}, node {node}")]
    Hypothesis {
        hypothesis: &'static str,
        step: usize,
        node: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

use std::fmt;

use thiserror::Error;

use crate::expr::ExprError;
use crate::linalg::LinalgError;
use crate::ode::OdeError;

/// Standing assumptions on the control system `x' = A(t)x + B(t)u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// `B(t)` is square and nonsingular.
    NonsingularInput,
    /// The system is completely state controllable.
    Controllability,
    /// `A` and `B` are continuously differentiable (finite on the interval).
    Smoothness,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::NonsingularInput => "nonsingular input matrix B(t)",
            Hypothesis::Controllability => "complete controllability",
            Hypothesis::Smoothness => "smooth coefficients",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("hypothesis violated ({hypothesis}): {detail}")]
    Hypothesis {
        hypothesis: Hypothesis,
        detail: String,
    },
    #[error("Gramian on [{t0}, {t1}] is not positive definite")]
    NotPositiveDefinite { t0: f64, t1: f64 },
    #[error("operator of order {order} needs {needed} derivatives, got {given}")]
    MissingDerivative {
        order: usize,
        needed: usize,
        given: usize,
    },
    #[error("collocation system of size {size} is singular (smallest pivot / norm = {pivot_ratio:.3e})")]
    SingularCollocation { size: usize, pivot_ratio: f64 },
    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_segment(self, index: usize) -> Self {
        Error::Segment {
            index,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through segment wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Segment { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

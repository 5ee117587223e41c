use alloc::string::String;

use crate::expr::EvalError;

/// Failures of the geometry, dynamics and measure pipelines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("metric is not positive definite ({context})")]
    SingularMetric { context: &'static str },
    #[error("torsion is not skew in its lower indices (residual {residual:e})")]
    NonSkewTorsion { residual: f64 },
    #[error("constraint saddle system is singular")]
    SingularSaddle,
    #[error("integrator exceeded {max_steps} steps")]
    StepLimitExceeded { max_steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("beta is not closed on the region (residual {residual:e})")]
    NotClosed { residual: f64 },
    #[error("quadrature produced a non-finite value")]
    QuadratureFailure,
    #[error("base trajectory too coarse for the lift (residual {residual:e} > {tolerance:e})")]
    InterpolationTooCoarse { residual: f64, tolerance: f64 },
    #[error("loop is not closed (gap {gap:e})")]
    LoopNotClosed { gap: f64 },
    #[error("parameter `{name}` out of range: {reason}")]
    ParameterOutOfRange { name: String, reason: String },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

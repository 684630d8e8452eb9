use thiserror::Error;

/// Errors raised by model construction, synthesis and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("singular matrix in {context} (condition number {condition:.3e})")]
    Singular {
        context: &'static str,
        condition: f64,
    },

    #[error("pair (A, B) is not stabilizable")]
    NotStabilizable,

    #[error("pair (A, B) is not controllable (condition number {condition:.3e})")]
    Uncontrollable { condition: f64 },

    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("closed loop is not stable (spectral radius {0})")]
    Unstable(f64),

    #[error("invariant set bound diverges: {0}")]
    DivergentBound(String),

    #[error("simulation diverged at step {step} (t = {t:.3} s): {reason}")]
    Diverged { step: usize, t: f64, reason: String },

    #[error("no stable speed found for {0}")]
    NoStableSpeed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("steady-state consistency check failed: |M|^2 = {computed:e} vs root {expected:e}")]
    Inconsistent { computed: f64, expected: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("operating point is inside a bistable window; a branch hint is required")]
    AmbiguousBranch,

    #[error("observation lies on the {found} branch, not the requested {requested} branch")]
    BranchMismatch {
        requested: &'static str,
        found: &'static str,
    },

    #[error("no root bracket found for {0}")]
    NoBracket(&'static str),

    #[error("no stable root at axis value {axis_value:e}")]
    NoStableRoot { axis_value: f64 },

    #[error("step size underflow at t = {t:e} s (h = {h:e} s)")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("trajectory diverged at t = {t:e} s (norm {norm:e} > bound {bound:e})")]
    Divergence { t: f64, norm: f64, bound: f64 },

    #[error("step budget of {0} exhausted")]
    StepBudget(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

//! Error types shared across the solver stack.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// Configuration or grid construction rejected an input.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A solver step produced a non-finite field value.
    #[error("numerical failure at step {step}: {detail}")]
    NumericalFailure { step: usize, detail: String },

    /// Field energy reached a domain boundary or the run ended with too much
    /// energy still inside the grating. The fix is a longer time window,
    /// which on this grid means longer lead-in/lead-out buffers.
    #[error(
        "containment violation at step {step}: {detail}; \
         increase lead_in/lead_out so the run can use a longer time window"
    )]
    ContainmentViolation { step: usize, detail: String },

    /// A measurement region holds essentially no energy.
    #[error("projection region {region} holds {fraction:.3e} of the input energy; measurement undefined")]
    EmptyRegion { region: String, fraction: f64 },

    /// Two fields (or a field and a trajectory) live on different grids.
    #[error("grid mismatch: expected {expected} samples, got {got}")]
    GridMismatch { expected: usize, got: usize },

    /// A back-propagation was requested past the stored trajectory window.
    #[error("trajectory covers steps 0..={available}, requested step {requested}")]
    WindowExceeded { requested: usize, available: usize },

    /// Bisection could not bracket the target.
    #[error("bracket failure: {0}")]
    BracketFailure(String),

    /// The peak-trace classifier could not order the bracket.
    #[error("ambiguous classification: {0}")]
    Ambiguous(String),

    /// An operation was asked to run in a mode it does not support.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("container format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

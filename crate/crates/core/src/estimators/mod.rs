//! Statistical fits used to check simulations against the theory.

mod breakpoint;
mod loss_curve;
mod powerlaw;

use thiserror::Error;

pub use breakpoint::{fit_breakpoint, fit_line, fit_three_phase, BreakpointFit, LineFit, ThreePhaseFit};
pub use loss_curve::{fit_loss_curve, LossCurveFit};
pub use powerlaw::{fit_power_law, fit_power_law_at, ks_distance, PowerLawFit};

/// Smallest tail a power-law fit accepts.
pub const MIN_TAIL: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("sample {0} lies outside the PMF support")]
    SupportMismatch(u64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("fit failed: {0}")]
    FitFailed(String),
}

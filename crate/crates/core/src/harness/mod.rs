//! Experiment orchestration: declarative specs, parallel replicate sweeps,
//! verification against the closed forms, and CSV / JSON / SVG artifacts.

mod emit;
mod fit;
mod plot;
mod spec;
mod sweep;
mod verify;

use std::path::PathBuf;

use thiserror::Error;

use crate::analytic::AnalyticError;
use crate::estimators::FitError;
use crate::loss::LossError;
use crate::urn::UrnError;

pub use emit::{
    atomic_write, emit_csv, emit_fit_report, emit_histogram_csv, emit_loss_csv, emit_outputs, render_csv,
    render_fit_report, render_histogram_csv, render_loss_csv, TRAJECTORY_HEADER,
};
pub use fit::{fit_from_csv, read_column, FitKind, FitOutput};
pub use plot::{emit_plot, render_svg};
pub use spec::{
    builtin, load_spec, DGrid, ExperimentSpec, OutputKind, OutputRequest, UrnOverrides, VerifySettings, DEFAULT_REPLICATES,
    DESK_SPEC, LARGE_SPEC,
};
pub use sweep::{run_sweep, Fits, Provenance, Record, ReplicateSummary, SweepResult};
pub use verify::{verify, CheckResult, VerifyReport};

/// Process exit statuses of the CLI.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const VERIFICATION: i32 = 2;
    pub const IO: i32 = 3;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Urn(#[from] UrnError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io { .. } => exit::IO,
            _ => exit::USAGE,
        }
    }
}

//! End-to-end orchestration: configuration, artifact files, the run manifest
//! and the experiment commands.
//!
//! Every command takes a [`RunConfig`], reads its inputs from and writes its
//! outputs to `out_dir`, and records checksums in `manifest.json`. All writes
//! are atomic (temp file + rename).

mod artifacts;
mod commands;
mod config;
mod experiments;
mod results;
mod validate;

use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::fit::FitError;
use crate::gp::GpError;
use crate::prior::PriorError;
use crate::search::SearchError;

pub use artifacts::{atomic_write, sha256_file, ArtifactEntry, Manifest, StageTiming};
pub use commands::{bootstrap, fit, run, search, train_prior, BootstrapSummary, FitSummary, RunSummary, SearchSummary, TrainSummary};
pub use config::{CsvData, Paths, Problem, RunConfig};
pub use experiments::{
    ablate_coeff, noise_sweep, sweep, time_evaluation, timing, AblationArm, AblationReport, AblationRow, Knob,
    NoiseSweepReport, SweepCell, SweepMean, SweepTable, TimingRow,
};
pub use results::{read_results, write_results, RecordKind, ResultRecord, RESULTS_SCHEMA_VERSION};
pub use validate::{validate, ArtifactKind, ValidationReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{context}: {source}")]
    Data { context: String, source: DataError },
    #[error("bootstrap: {0}")]
    Gp(#[from] GpError),
    #[error("prior: {0}")]
    Prior(#[from] PriorError),
    #[error("search: {0}")]
    Search(#[from] SearchError),
    #[error("fit: {0}")]
    Fit(#[from] FitError),
    #[error("{path}: {reason}")]
    BadArtifact { path: PathBuf, reason: String },
    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl PipelineError {
    /// Process exit code: 2 configuration, 3 stage failure, 4 assertion.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Assertion(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.into(), source }
    }

    pub(crate) fn data(context: impl Into<String>, source: DataError) -> Self {
        PipelineError::Data { context: context.into(), source }
    }
}

/// Version string written into manifests.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

//! Configuration, orchestration and artifacts for the command-line front end.

mod analyze;
mod config;
mod output;
mod run;
mod verify;

pub use analyze::{
    analyze_field, analyze_run, geometric, report_digest, AnalysisSettings, FieldAnalysis, FluxSummary, LadderEntry,
    OscillationSummary, PinSummary, RunAnalysis, StageField, StageSummary,
};
pub use config::{
    AnalysisConfig, ConfigError, ContinuationConfig, FlowConfig, GridConfig, OutputConfig, ParamsConfig, PathOrder,
    PlanarCase, RunConfig, Tolerances, VerifyConfig,
};
pub use output::{boundary_csv, export_plots, field_csv, oscillation_csv, sha256_hex, Artifact, OutputDir, RunManifest, StageDigest};
pub use run::{run, Checkpoint, Command, RunOptions, RunOutcome, StoredStage};
pub use verify::{phase_plane_x, planar_oracle_error, planar_q1, verify_suite, Check, Criterion, PlanarVerification, VerifyOutcome, VerifyReport};

use crate::flowfield::FlowError;
use crate::grid_field::GridError;
use crate::newton_solver::SolverError;
use crate::planar_ode::PlanarError;
use crate::wave_analysis::AnalysisError;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing input file {0}")]
    Missing(String),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Planar(#[from] PlanarError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            RunError::Missing(path.display().to_string())
        } else {
            RunError::Io {
                path: path.display().to_string(),
                source,
            }
        }
    }
}

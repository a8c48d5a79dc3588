use std::path::PathBuf;

use carfollow::dataset::DatasetError;
use carfollow::evaluation::EvalError;
use carfollow::gbrt::GbrtError;
use carfollow::ghr::GhrError;
use carfollow::reconstruction::ReconstructionError;
use carfollow::synthetic::SyntheticError;
use carfollow::trajectory_io::TrajectoryError;
use thiserror::Error;

/// Data and validation failures; all map to exit code 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Reconstruction(#[from] ReconstructionError),
    #[error(transparent)]
    Gbrt(#[from] GbrtError),
    #[error(transparent)]
    Ghr(#[from] GhrError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Input(String),
}

impl CliError {
    /// Stable identifier printed after `ERROR`.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "Io",
            CliError::Trajectory(TrajectoryError::Schema(_)) => "Schema",
            CliError::Trajectory(TrajectoryError::Parse { .. }) => "Parse",
            CliError::Trajectory(_) => "Trajectory",
            CliError::Dataset(_) => "Dataset",
            CliError::Reconstruction(_) => "Reconstruction",
            CliError::Gbrt(_) => "Gbrt",
            CliError::Ghr(_) => "Ghr",
            CliError::Evaluation(_) => "Evaluation",
            CliError::Synthetic(_) => "Synthetic",
            CliError::Json { .. } => "Json",
            CliError::Input(_) => "Input",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

use std::fmt;
use std::path::PathBuf;

use cws_core::CwsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("referenced file not found: {}", .0.display())]
    MissingFile(PathBuf),
}

impl ConfigError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        ConfigError::Invalid(msg.into())
    }
}

/// Pipeline stage names, used to tag errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    States,
    Ft,
    Forward,
    Sampling,
    Estimation,
    Reconstruction,
    InverseFt,
    Serialization,
    Render,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::States => "states",
            Stage::Ft => "ft",
            Stage::Forward => "forward",
            Stage::Sampling => "sampling",
            Stage::Estimation => "estimation",
            Stage::Reconstruction => "reconstruction",
            Stage::InverseFt => "inverse_ft",
            Stage::Serialization => "serialization",
            Stage::Render => "render",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: CwsError,
    },
}

impl PipelineError {
    /// Process exit code: 2 for configuration problems, 3 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            PipelineError::Config(_) => None,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T> StageExt<T> for Result<T, CwsError> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError::Stage { stage, source })
    }
}

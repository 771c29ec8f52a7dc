use thiserror::Error;

pub type Result<T, E = CwsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CwsError {
    #[error("coordinate {value} on axis {axis} outside [0, {len})")]
    Index { axis: usize, value: usize, len: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("field is identically zero")]
    DegenerateField,

    #[error("phase pattern does not cover the lattice: {0}")]
    Coverage(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("displacement {displacement} m is not an integer multiple of the pitch {pitch} m")]
    GridMismatch { displacement: f64, pitch: f64 },

    #[error("probability mass is zero everywhere")]
    DegenerateDistribution,

    #[error("region of interest is empty")]
    EmptyRoi,

    #[error("{unreachable} masked bins are unreachable from the reference bin")]
    DisconnectedRoi { unreachable: usize },

    #[error("phase fill did not terminate within {cap} queue operations")]
    Convergence { cap: u64 },

    #[error("wave function amplitude vanishes at bin {bin}")]
    ZeroAmplitude { bin: usize },

    #[error("singular system: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CwsError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        CwsError::Argument(msg.into())
    }
}

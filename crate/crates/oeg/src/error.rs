use thiserror::Error;

/// Errors shared across the pipeline stages.
#[derive(Debug, Error)]
pub enum OegError {
    #[error("degenerate shape: {0}")]
    DegenerateShape(String),

    #[error("cut locus: principal angle within tolerance of pi/2, geodesic direction undefined")]
    CutLocus,

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("frame-rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),

    #[error("requested dimension {requested} exceeds numerical rank {rank}")]
    RankTooLow { requested: usize, rank: usize },

    #[error("series too short: {got} frames, need at least {need}")]
    TooShort { got: usize, need: usize },

    #[error("supervectors were adapted from different priors")]
    PriorMismatch,

    #[error("control set is empty")]
    EmptyControls,

    #[error("kernel system is singular even after noise escalation")]
    SingularSystem,

    #[error("targets have zero variance")]
    ZeroVariance,

    #[error("score {0} outside the valid range 0..=52")]
    InvalidScore(f64),

    #[error("cohort too small: {got} treated records, need at least {need}")]
    InsufficientCohort { got: usize, need: usize },

    #[error("Tucker rank {rank} exceeds mode-{mode} dimension {dim}")]
    RankTooLarge {
        mode: usize,
        rank: usize,
        dim: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("config hash mismatch: artifact {artifact} was produced under {found}, current config is {expected}")]
    ConfigMismatch {
        artifact: String,
        found: String,
        expected: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OegError>;

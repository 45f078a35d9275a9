use thiserror::Error;

/// Errors produced anywhere in the calibration engine.
///
/// Every variant maps to a stable machine-readable code (see [`Error::code`])
/// which the CLI and the guidance service emit verbatim.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point lies behind the camera (z = {depth})")]
    BehindCamera { depth: f64 },
    #[error("viewing rays are degenerate (angle {angle:e} rad, baseline {baseline:e} mm)")]
    DegenerateRays { angle: f64, baseline: f64 },
    #[error("distortion inversion did not converge")]
    UndistortionFailed,
    #[error("invalid camera model: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("information matrix is singular (condition {condition:e})")]
    SingularInformation { condition: f64 },
    #[error("no visible candidate pose found in {iterations} iterations")]
    NoFeasibleCandidate { iterations: usize },
    #[error("pose constraints unsatisfiable after {attempts} attempts")]
    ConstraintUnsatisfiable { attempts: usize },
    #[error("need at least 4 correspondences, got {got}")]
    InsufficientPoints { got: usize },
    #[error("degenerate point configuration (collinear)")]
    DegenerateConfiguration,
    #[error("optimization diverged after {escalations} consecutive damping escalations")]
    DivergedOptimization { escalations: usize },
    #[error("translation error undefined for two zero vectors")]
    UndefinedError,
    #[error("board is not fully visible in both cameras")]
    NotVisible,
    #[error("need at least {needed} views, got {got}")]
    InsufficientViews { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl Error {
    /// Stable error code string.
    pub fn code(&self) -> &'static str {
        match self {
            Error::BehindCamera { .. } => "BEHIND_CAMERA",
            Error::DegenerateRays { .. } => "DEGENERATE_RAYS",
            Error::UndistortionFailed => "UNDISTORTION_FAILED",
            Error::InvalidModel(_) => "INVALID_MODEL",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::SingularInformation { .. } => "SINGULAR_INFORMATION",
            Error::NoFeasibleCandidate { .. } => "NO_FEASIBLE_CANDIDATE",
            Error::ConstraintUnsatisfiable { .. } => "CONSTRAINT_UNSATISFIABLE",
            Error::InsufficientPoints { .. } => "INSUFFICIENT_POINTS",
            Error::DegenerateConfiguration => "DEGENERATE_CONFIGURATION",
            Error::DivergedOptimization { .. } => "DIVERGED_OPTIMIZATION",
            Error::UndefinedError => "UNDEFINED_ERROR",
            Error::NotVisible => "NOT_VISIBLE",
            Error::InsufficientViews { .. } => "INSUFFICIENT_VIEWS",
            Error::DimensionMismatch(_) => "DIMENSION_MISMATCH",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

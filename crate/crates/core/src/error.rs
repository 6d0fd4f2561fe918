use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the layout pipeline.
///
/// Degenerate geometry (parallel planes, corners behind the camera, an
/// unusable region) is not an error; those cases come back as `None`.
#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),

    #[error("floor fallback impossible: {0}")]
    DegenerateFloorFallback(String),

    #[error("no feasible partition")]
    NoFeasiblePartition,

    #[error("inconsistent layout topology: {0}")]
    Topology(String),

    #[error("non-simple polygon {0} cannot be triangulated")]
    NonSimplePolygon(u32),

    #[error("invalid scene: {}", .0.join("; "))]
    InvalidScene(Vec<String>),

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("malformed PFM: {0}")]
    Pfm(String),

    #[error("malformed PNG {path}: {reason}")]
    Png { path: PathBuf, reason: String },

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LayoutError {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            LayoutError::InvalidIntrinsics(_) => "invalid_intrinsics",
            LayoutError::NonPositiveDepth(_) => "non_positive_depth",
            LayoutError::DegenerateFloorFallback(_) => "degenerate_floor_fallback",
            LayoutError::NoFeasiblePartition => "no_feasible_partition",
            LayoutError::Topology(_) => "topology",
            LayoutError::NonSimplePolygon(_) => "non_simple_polygon",
            LayoutError::InvalidScene(_) => "invalid_scene",
            LayoutError::InvalidSynthSpec(_) => "invalid_synth_spec",
            LayoutError::Metric(_) => "metric",
            LayoutError::Pfm(_) => "pfm",
            LayoutError::Png { .. } => "png",
            LayoutError::Io { .. } => "io",
            LayoutError::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LayoutError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = LayoutError> = std::result::Result<T, E>;

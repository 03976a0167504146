use thiserror::Error;

/// Errors surfaced by the solvers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Ball centers affinely dependent, or a least-squares system lost rank.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// The spheres' boundaries have no common point (margin squared < 0).
    #[error("empty boundary intersection: margin squared = {margin_squared:.6e}")]
    EmptyBoundaryIntersection { margin_squared: f64 },

    /// The target projects onto the core, so the update direction is undefined.
    #[error("ambiguous projection direction: |proj(y) - core| = {distance:.6e}")]
    AmbiguousDirection { distance: f64 },

    /// Alternating projections stalled with a residual violation; the balls
    /// most likely do not intersect.
    #[error("infeasible intersection: best violation {violation:.6e} after {cycles} cycles")]
    InfeasibleIntersection { violation: f64, cycles: usize },

    #[error("degenerate minimizer: stationarity residual {residual:.6e} exceeds tolerance")]
    DegenerateMinimizer { residual: f64 },

    #[error("missing metadata: {0}")]
    MissingMetadata(&'static str),

    #[error("trace too short: {len} usable iterations, need at least {min}")]
    TraceTooShort { len: usize, min: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

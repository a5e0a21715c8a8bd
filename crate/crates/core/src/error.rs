use thiserror::Error;

/// Errors raised by grid construction, operator assembly and the solvers.
#[derive(Debug, Error)]
pub enum KineticError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("resolution {got} is below the minimum of {min} nodes per coordinate")]
    Resolution { got: usize, min: usize },

    #[error("grid functions live on different velocity grids")]
    GridMismatch,

    #[error("kernel evaluated on its diagonal singularity (xi == xi_star)")]
    DiagonalSingularity,

    #[error("operator dimension {dim} exceeds the size cap {cap}")]
    TooLarge { dim: usize, cap: usize },

    #[error("right-hand side has a kernel component of relative size {0:.3e}")]
    KernelComponent(f64),

    #[error("branch tracking ambiguous at k = {k}: best overlap {overlap:.3}")]
    BranchAmbiguity { k: f64, overlap: f64 },

    #[error("datum is not band-limited: spectrum at k_max is {0:.3e} of its peak")]
    Aliasing(f64),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Cache(#[from] CacheError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Failures of the binary operator cache.
#[derive(Debug, Error)]
pub enum CacheError {
    #[error("corrupt cache header: {0}")]
    CorruptHeader(String),

    #[error("cache format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("cache {field} hash mismatch")]
    HashMismatch { field: &'static str },
}

pub type Result<T> = std::result::Result<T, KineticError>;

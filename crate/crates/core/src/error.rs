use thiserror::Error;

/// Errors produced by grid construction, model assembly, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size must be even and at least 4, got {0}")]
    InvalidGridSize(usize),

    #[error("value out of the domain [-pi, pi): {0}")]
    OutOfDomain(f64),

    #[error("unknown signal id `{0}`")]
    UnknownSignal(String),

    #[error("unknown image id `{0}`")]
    UnknownImage(String),

    #[error("pixel index ({j}, {jp}) out of range for n = {n} (indices are 1-based)")]
    PixelOutOfRange { j: usize, jp: usize, n: usize },

    #[error("signal `{0}` has no analytic edge vector")]
    NoAnalyticEdges(String),

    #[error("non-finite sample value {value} at grid index {index}")]
    NonFiniteSample { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("sampling ratio {0} must lie in [0, 1) and keep at least one row")]
    InvalidRatio(f64),

    #[error("blur width must be positive, got {0}")]
    InvalidBlurWidth(f64),

    #[error("cannot calibrate noise precision for a zero signal")]
    ZeroSignal,

    #[error("stencil order p = {p} needs more than {min} grid points, got {n}")]
    StencilTooWide { p: usize, n: usize, min: usize },

    #[error("shift parameter zeta = {0} must lie in [0, 1)")]
    InvalidShift(f64),

    #[error("hyperparameters must satisfy eta > 0 and vartheta > 0 (beta = {beta}, vartheta = {vartheta})")]
    InvalidHyperParams { beta: f64, vartheta: f64 },

    #[error("hyperparameter vector must be positive, found {0}")]
    NonPositiveTheta(f64),

    #[error("conjugate gradient did not converge in {iters} iterations (relative residual {rel_residual:.3e})")]
    CgStalled { iters: usize, rel_residual: f64 },

    #[error("posterior precision is not positive definite; the forward model and prior transform share a kernel direction")]
    KernelConditionViolated,

    #[error("credible level {0} must lie in (0, 1)")]
    InvalidLevel(f64),

    #[error("problem of dimension {0} is too large for dense posterior covariance (limit {1})")]
    PosteriorTooLarge(usize, usize),
}

pub type Result<T> = std::result::Result<T, Error>;

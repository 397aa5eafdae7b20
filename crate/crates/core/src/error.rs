use thiserror::Error;

/// Errors produced by the raster, loss, autodiff and metric routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid data has {actual} elements, expected {expected} ({width}x{height})")]
    DataLength {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("grid dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("value {value} at index {index} is not a binary label")]
    NotBinary { index: usize, value: f64 },
    #[error("pixel ({row}, {col}) lies outside a {width}x{height} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        width: usize,
        height: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("contour has no foreground pixels")]
    EmptyContour,
    #[error("boundary is empty on one side of the comparison")]
    EmptyBoundary,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("distance target must be normalized before computing the regression loss")]
    UnnormalizedTarget,
    #[error("prediction heads do not match variant {0}")]
    VariantMismatch(String),
    #[error("max pooling needs even spatial dims, got {height}x{width}")]
    OddDimension { height: usize, width: usize },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    DivergenceDetected { epoch: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point has non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
    #[error("rotation matrix is not orthonormal with det +1")]
    InvalidRotation,
    #[error("invalid camera intrinsics: {0}")]
    InvalidCamera(&'static str),
    #[error("gaussian centre is behind the camera")]
    BehindCamera,
    #[error("cannot render an empty cloud")]
    EmptyCloud,
    #[error("render state does not match the cloud or camera it is used with")]
    StateMismatch,
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("no valid pixels")]
    NoValidPixels,
    #[error("translation has non-zero z component {0}")]
    NonZeroT3(f64),
    #[error("image of {0}x{1} is smaller than the SSIM window")]
    ImageTooSmall(usize, usize),
    #[error("missing ground truth for view {0}")]
    MissingGroundTruth(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("non-finite loss at iteration {0}")]
    NonFinite(usize),
    #[error("no prior flow for view {view} at iteration {iter}")]
    PriorUnavailable { view: usize, iter: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

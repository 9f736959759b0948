use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("warp is singular (determinant {det:e})")]
    SingularWarp { det: f64 },

    #[error("image {width}x{height} is too small (need at least {min}x{min})")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("image dimensions {got:?} do not match {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid image data: {0}")]
    InvalidImage(String),

    #[error("global registration diverged after {iterations} iterations")]
    RegistrationDiverged { iterations: usize },

    #[error("Gauss-Newton system is singular (condition number {condition:e})")]
    SingularHessian { condition: f64 },

    #[error("tracking terminated on the first transition ({reason})")]
    EmptyBurst { reason: String },

    #[error("degenerate region (area {area})")]
    DegenerateRegion { area: f64 },

    #[error("rotation step {step} does not divide 360")]
    InvalidStep { step: f64 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("all samples are identical; no direction of variation")]
    RankDeficient,

    #[error("ambient dimensions differ ({left} vs {right})")]
    AmbientMismatch { left: usize, right: usize },

    #[error("label {0:?} is already enrolled")]
    DuplicateLabel(String),

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("label {0:?} is not in the gallery")]
    UnknownLabel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed subspace file: {0}")]
    Format(String),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SingularWarp { .. } => "SingularWarp",
            Error::ImageTooSmall { .. } => "ImageTooSmall",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidImage(_) => "InvalidImage",
            Error::RegistrationDiverged { .. } => "RegistrationDiverged",
            Error::SingularHessian { .. } => "SingularHessian",
            Error::EmptyBurst { .. } => "EmptyBurst",
            Error::DegenerateRegion { .. } => "DegenerateRegion",
            Error::InvalidStep { .. } => "InvalidStep",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::RankDeficient => "RankDeficient",
            Error::AmbientMismatch { .. } => "AmbientMismatch",
            Error::DuplicateLabel(_) => "DuplicateLabel",
            Error::EmptyGallery => "EmptyGallery",
            Error::ConfigMismatch(_) => "ConfigMismatch",
            Error::UnknownLabel(_) => "UnknownLabel",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Format(_) => "Format",
            Error::Image(_) => "Image",
            Error::Io(_) => "Io",
        }
    }
}

use thiserror::Error;

/// Errors raised by the library. Each variant maps to a stable numeric code
/// (see [`Error::code`]) shared by the CLI and the C interface.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("deformation gradient is not orientation preserving (det F = {det})")]
    NonOrientationPreserving { det: f64 },

    #[error("invalid density {rho}")]
    InvalidDensity { rho: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate lift: |d1 Phi| = {value}")]
    DegenerateLift { value: f64 },

    #[error("degenerate normal deformation: |rho F_1N| = {value}")]
    DegenerateF1N { value: f64 },

    #[error("mass flux across the front is nonzero: {value}")]
    MassFluxNonzero { value: f64 },

    #[error("eigenvalue multiplicity mismatch: {0}")]
    MultiplicityMismatch(String),

    #[error("constraint violated: {0}")]
    ConstraintViolated(String),

    #[error("singular minor in varrho: {value}")]
    SingularMinor { value: f64 },

    #[error("target pressure is not positive: {value}")]
    NegativeTargetPressure { value: f64 },

    #[error("boundary system is singular (condition number {cond:e})")]
    SingularBoundarySystem { cond: f64 },

    #[error("precondition residual too large: {name} = {value:e}")]
    PreconditionResidualTooLarge { name: String, value: f64 },

    #[error("insufficient history: need {needed} stored steps, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("CFL violation: dt = {dt:e} exceeds limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("NaN detected at step {step}")]
    NanDetected { step: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable numeric code, also used by the C interface.
    pub fn code(&self) -> i32 {
        match self {
            Error::NonOrientationPreserving { .. } => 1,
            Error::InvalidDensity { .. } => 2,
            Error::InvalidParameter(_) => 3,
            Error::DegenerateLift { .. } => 4,
            Error::DegenerateF1N { .. } => 5,
            Error::MassFluxNonzero { .. } => 6,
            Error::MultiplicityMismatch(_) => 7,
            Error::ConstraintViolated(_) => 8,
            Error::SingularMinor { .. } => 9,
            Error::NegativeTargetPressure { .. } => 10,
            Error::SingularBoundarySystem { .. } => 11,
            Error::PreconditionResidualTooLarge { .. } => 12,
            Error::InsufficientHistory { .. } => 13,
            Error::CflViolation { .. } => 14,
            Error::NanDetected { .. } => 15,
            Error::Unsupported(_) => 16,
            Error::Config(_) => 17,
            Error::Io(_) => 18,
        }
    }

    /// Short machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonOrientationPreserving { .. } => "NonOrientationPreserving",
            Error::InvalidDensity { .. } => "InvalidDensity",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::DegenerateLift { .. } => "DegenerateLift",
            Error::DegenerateF1N { .. } => "DegenerateF1N",
            Error::MassFluxNonzero { .. } => "MassFluxNonzero",
            Error::MultiplicityMismatch(_) => "MultiplicityMismatch",
            Error::ConstraintViolated(_) => "ConstraintViolated",
            Error::SingularMinor { .. } => "SingularMinor",
            Error::NegativeTargetPressure { .. } => "NegativeTargetPressure",
            Error::SingularBoundarySystem { .. } => "BoundarySolveSingular",
            Error::PreconditionResidualTooLarge { .. } => "PreconditionResidualTooLarge",
            Error::InsufficientHistory { .. } => "InsufficientHistory",
            Error::CflViolation { .. } => "CFLViolation",
            Error::NanDetected { .. } => "NaNDetected",
            Error::Unsupported(_) => "Unsupported",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }

    /// True for numerical aborts (NaN, CFL); these exit with status 2.
    pub fn is_numerical_abort(&self) -> bool {
        matches!(self, Error::NanDetected { .. } | Error::CflViolation { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

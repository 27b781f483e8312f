use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unsupported dimension {0}: only d = 2 and d = 3 are supported")]
    UnsupportedDimension(usize),
    #[error("n must be a power of two (got {0})")]
    NotPowerOfTwo(usize),
    #[error("grid size n = {0} outside the supported range 16..=2048")]
    GridSizeOutOfRange(usize),
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("field contains non-finite values")]
    NonFinite,
    #[error("expected {expected} values for the grid, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("coefficients are not conjugate symmetric (max defect {defect:e})")]
    AsymmetricCoefficients { defect: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("operation requires a {required}D grid, got {got}D")]
    DimensionRequired { required: usize, got: usize },
    #[error("time step {dt:e} violates the CFL limit; admissible dt = {admissible:e}")]
    CflViolation { dt: f64, admissible: f64 },
    #[error("numerical overflow (possible blow-up) at t = {t:e}")]
    NumericalOverflow { t: f64 },
    #[error("inadmissible exponents: {0}")]
    InadmissibleExponents(String),
    #[error("excluded case: {0}")]
    ExcludedCase(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

//! Error taxonomy shared by every module.

use thiserror::Error;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Grid construction rejected (axis too short, length mismatch, bad period).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Operands live on incompatible grids or have the wrong component count.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A pointwise frame/coframe system is numerically singular.
    #[error("singular frame at grid point {index}: condition estimate {cond:.3e}")]
    SingularFrame { index: usize, cond: f64 },

    /// Structure-equation residual exceeded tolerance.
    #[error("structure residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    StructureResidual { residual: f64, tol: f64 },

    /// A rescaled coframe failed the Levi normalization check.
    #[error("coframe normalization failure: Levi residual {residual:.3e} exceeds {tol:.3e}")]
    NormalizationFailure { residual: f64, tol: f64 },

    /// Sections handed to a frame contraction do not share a base map/structure.
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    /// Target has no compatible complex structure for a holomorphy check.
    #[error("target carries no compatible complex structure")]
    NoComplexStructure,

    /// Retraction asked to move past its injectivity guard.
    #[error("retraction step too large: |v| = {norm:.3e}, guard {guard:.3e}")]
    StepTooLarge { norm: f64, guard: f64 },

    /// Backtracking line search shrank below the minimum step.
    #[error("line search collapsed below minimum step {min_step:.1e}")]
    StepCollapse { min_step: f64 },

    /// Jet recursion requires the exact flat model.
    #[error("not a flat model: {0}")]
    NotFlatModel(String),

    /// Einstein divergence coefficients evaluated at or past the metric pole.
    #[error("pole reached: |lambda * r| = {value:.6} >= 1")]
    PoleReached { value: f64 },

    /// Expression text failed to parse.
    #[error("parse error at byte {offset}: expected {expected}, found {found}")]
    Parse {
        offset: usize,
        expected: String,
        found: String,
    },

    /// Expression references a variable the grid does not provide.
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    /// Pointwise division hit a zero denominator.
    #[error("division by zero during expression evaluation")]
    DivisionByZero,

    /// Experiment configuration is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// I/O while reading configs or writing artifacts.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

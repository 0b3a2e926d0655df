use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("separator gradient vanished (norm {norm:e})")]
    ZeroGradient { norm: f64 },

    #[error("bad bounding box: {0}")]
    BadBox(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("simplex stalled after {iterations} iterations ({detail})")]
    NumericalFailure { iterations: usize, detail: String },

    #[error("bundle is empty")]
    EmptyBundle,

    #[error("level set is empty at level {level}")]
    EmptyLevelSet { level: f64 },

    #[error("model contract violated: {0}")]
    ModelContractViolation(String),

    #[error("ellipsoid shape matrix degenerated beyond repair")]
    ShapeDegenerate,

    #[error("objective is unbounded over the strategic set (boundedness assumption violated)")]
    UnboundedObjective,

    #[error("the static set Y is empty")]
    EmptyStaticSet,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad instance: {0}")]
    BadInstance(String),

    #[error("clairvoyant problem is infeasible")]
    ClairvoyantInfeasible,

    #[error("basis dimension mismatch: {0}")]
    BasisDimensionMismatch(String),

    #[error("coefficient box is required for the lifted model")]
    UnboundedChi,

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("could not parse {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

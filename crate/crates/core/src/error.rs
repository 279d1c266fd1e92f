use thiserror::Error;

/// Errors raised by the model, reduction, integration and HJB layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("non-finite entries in matrix {name}")]
    NonFiniteMatrix { name: String },

    #[error("eigenvalue computation did not converge")]
    EigenFailure,

    #[error("fast matrix is singular (condition estimate {condition:.3e})")]
    SingularFastMatrix { condition: f64 },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("CFL violation at node {node} with control {control}: courant number {courant:.4}")]
    CflViolation {
        node: usize,
        control: usize,
        courant: f64,
    },

    #[error("non-finite value at time slice {slice}, node {node}")]
    NonFiniteValue { slice: usize, node: usize },

    #[error("grid has {nodes} nodes, budget is {budget}")]
    GridTooLarge { nodes: usize, budget: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("state layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("density {value:.3e} below floor {floor:.3e} at cell {cell}")]
    DensityFloor { cell: usize, value: f64, floor: f64 },

    #[error("negative temperature {value:.3e} at cell {cell}")]
    NegativeTemperature { cell: usize, value: f64 },

    #[error("fast state left the configured box at time {time}")]
    BoundsExceeded { time: f64 },

    #[error("operation needs an affine fast-to-slow coupling but the system carries a nonlinear slow drift")]
    NonAffineSystem,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Short variant name, used by the CLI on stderr.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFiniteMatrix { .. } => "NonFiniteMatrix",
            Error::EigenFailure => "EigenFailure",
            Error::SingularFastMatrix { .. } => "SingularFastMatrix",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::GridMismatch(_) => "GridMismatch",
            Error::CflViolation { .. } => "CflViolation",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::GridTooLarge { .. } => "GridTooLarge",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::LayoutMismatch(_) => "LayoutMismatch",
            Error::DensityFloor { .. } => "DensityFloor",
            Error::NegativeTemperature { .. } => "NegativeTemperature",
            Error::BoundsExceeded { .. } => "BoundsExceeded",
            Error::NonAffineSystem => "NonAffineSystem",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }

    pub(crate) fn dims(context: &str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            context: context.to_string(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. Variants carry enough context to be
/// serialized by the command-line front end.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("unknown gallery operator `{0}`")]
    UnknownGallery(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error("expression error at offset {offset}: {message}")]
    Expression { offset: usize, message: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("A(x) vanishes at {point:?}")]
    TotallyDegeneratePoint { point: Vec<f64> },

    #[error("grid needs at least 3 nodes per axis (axis {axis} has {count})")]
    GridTooSmall { axis: usize, count: usize },
    #[error("grid has {nodes} nodes, above the cap of {cap}")]
    GridTooLarge { nodes: usize, cap: usize },
    #[error("invalid bounds on axis {axis}: [{lo}, {hi}]")]
    InvalidBounds { axis: usize, lo: f64, hi: f64 },
    #[error("domain has no interior nodes")]
    EmptyDomain,
    #[error("domain interior has {components} connected components")]
    DisconnectedDomain { components: usize },
    #[error("no exterior ball found at boundary node {node}")]
    NoExteriorBall { node: usize },

    #[error("non-finite coefficient at node {node} ({what})")]
    CoefficientError { node: usize, what: String },
    #[error("point {point:?} lies outside the ball where w > 0")]
    OutsideBallOfValidity { point: Vec<f64> },

    #[error("singular system: pivot {pivot:e} at row {row}")]
    SingularSystem { row: usize, pivot: f64 },
    #[error("solver diverged: relative residual {residual:e}")]
    SolverDiverged { residual: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("characteristic direction: <A(y)nu, nu> = {value:e}")]
    CharacteristicDirection { value: f64 },
    #[error("trajectory left the domain at t = {t} (point {point:?})")]
    LeftDomain { t: f64, point: Vec<f64> },

    #[error("degenerate basepoint: harmonic measure of boundary node {boundary_node} vanishes at node {node}")]
    DegenerateBasepoint { node: usize, boundary_node: usize },
    #[error("compact set is within {distance} nodes of the boundary, {required} required")]
    CollarViolation { distance: usize, required: usize },
    #[error("no admissible radius at node {node}")]
    ChainFailure { node: usize },
}

impl Error {
    /// Stable machine-readable identifier of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownGallery(_) => "UnknownGallery",
            Error::InvalidProfile(_) => "InvalidProfile",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::InvalidOperator(_) => "InvalidOperator",
            Error::Expression { .. } => "Expression",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::TotallyDegeneratePoint { .. } => "TotallyDegeneratePoint",
            Error::GridTooSmall { .. } => "GridTooSmall",
            Error::GridTooLarge { .. } => "GridTooLarge",
            Error::InvalidBounds { .. } => "InvalidBounds",
            Error::EmptyDomain => "EmptyDomain",
            Error::DisconnectedDomain { .. } => "DisconnectedDomain",
            Error::NoExteriorBall { .. } => "NoExteriorBall",
            Error::CoefficientError { .. } => "CoefficientError",
            Error::OutsideBallOfValidity { .. } => "OutsideBallOfValidity",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::SolverDiverged { .. } => "SolverDiverged",
            Error::PreconditionViolated(_) => "PreconditionViolated",
            Error::CharacteristicDirection { .. } => "CharacteristicDirection",
            Error::LeftDomain { .. } => "LeftDomain",
            Error::DegenerateBasepoint { .. } => "DegenerateBasepoint",
            Error::CollarViolation { .. } => "CollarViolation",
            Error::ChainFailure { .. } => "ChainFailure",
        }
    }

    /// True for failures of the numerical pipeline, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem { .. }
                | Error::SolverDiverged { .. }
                | Error::CoefficientError { .. }
                | Error::DegenerateBasepoint { .. }
                | Error::ChainFailure { .. }
                | Error::NoExteriorBall { .. }
                | Error::LeftDomain { .. }
                | Error::CharacteristicDirection { .. }
                | Error::TotallyDegeneratePoint { .. }
                | Error::PreconditionViolated(_)
                | Error::OutsideBallOfValidity { .. }
        )
    }
}

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("grid has no nodes")]
    EmptyGrid,
    #[error("expected {expected} samples, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("tangent {index} is not unit length (|k| = {norm})")]
    NotUnit { index: usize, norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObstacleError {
    #[error("invalid obstacle: {0}")]
    Invalid(String),
    #[error("no obstacle boundary within {band} of the query point (distance {distance})")]
    NoNearbyBoundary { distance: f64, band: f64 },
    #[error("signed distance gradient is undefined at the query point")]
    DegenerateGradient,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrowthError {
    #[error("cell born at s = {s} evaluated at earlier time t = {t}")]
    AgeNegative { t: f64, s: f64 },
    #[error("invalid growth law: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReactionError {
    #[error("node {node} penetrates the obstacle (signed distance {distance}, allowed {allowed})")]
    PenetrationExceeded {
        node: usize,
        distance: f64,
        allowed: f64,
    },
    #[error("constraint assembly requires at least one contact")]
    EmptyContactSet,
    #[error("no angular velocity satisfies the contact constraints (worst slack {worst_slack})")]
    Infeasible { worst_slack: f64 },
    #[error("dual solver stalled after {iterations} iterations (KKT residual {residual})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("enumeration oracle supports at most {max} contacts, got {found}")]
    TooManyContacts { found: usize, max: usize },
    #[error("no active set yields a feasible KKT point")]
    NoCandidateFeasible,
    #[error(transparent)]
    Obstacle(#[from] ObstacleError),
    #[error(transparent)]
    Growth(#[from] GrowthError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("initial curve violates non-penetration: {0}")]
    InitialPenetration(String),
    #[error("initial configuration is a breakdown configuration")]
    InitialBreakdown,
    #[error("invalid simulation setup: {0}")]
    InvalidConfig(String),
    #[error("breakdown configuration reached; the solution cannot be continued")]
    BreakdownReached,
    #[error("horizon already reached")]
    HorizonReached,
    #[error("reaction is infeasible: {0}")]
    InfeasibleReaction(ReactionError),
    #[error("constraint correction did not converge (residual {residual})")]
    CorrectionStalled { residual: f64 },
    #[error("state invariant violated: {0}")]
    InvariantViolated(String),
    #[error(transparent)]
    Reaction(ReactionError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Growth(#[from] GrowthError),
}

impl From<ReactionError> for StepError {
    fn from(e: ReactionError) -> Self {
        match e {
            ReactionError::Infeasible { .. } | ReactionError::MaxIterations { .. } => {
                StepError::InfeasibleReaction(e)
            }
            other => StepError::Reaction(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("tangents at node {node} are antipodal; the rotation axis is undefined")]
    AntipodalAmbiguity { node: usize },
    #[error("stems live on different grids: {0}")]
    GridMismatch(String),
    #[error("distance series touches zero at sample {index}; the runs coincide there")]
    NonPositiveDistance { index: usize },
    #[error("distance series has {found} samples, need at least {min}")]
    SeriesTooShort { found: usize, min: usize },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

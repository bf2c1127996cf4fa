//! Growth of plant stems around rigid obstacles.
//!
//! A stem is an inextensible curve `γ(t, s)` pinned at the origin that grows
//! at unit speed from its tip, so arclength equals the birth time of each
//! cell. Cells bend with a free angular-velocity density `Ψ` (for example a
//! gravitropic response), and when the stem presses on an obstacle a
//! reaction density `ω̄` of least elastic energy keeps it outside.
//!
//! * [`curves`]: rotations, grids and tangent integration.
//! * [`obstacles`]: signed distance fields and outer normals.
//! * [`growth`]: free growth laws.
//! * [`reaction`]: contact detection, constraint assembly and the reaction
//!   solvers.
//! * [`stepper`]: time stepping, breakdown detection and runs.
//! * [`diagnostics`]: distances between solutions and invariant audits.
//! * [`scenario`]: configuration files, trajectory output and twin runs.

pub mod curves;
pub mod diagnostics;
pub mod error;
pub mod growth;
pub mod obstacles;
pub mod reaction;
pub mod scenario;
pub mod stepper;

pub use curves::{ArclengthGrid, UnitVec3, Vec3};
pub use error::{
    ConfigError, DiagnosticsError, GeometryError, GrowthError, ObstacleError, ReactionError,
    StepError,
};
pub use growth::GrowthLaw;
pub use obstacles::{Obstacle, Scene};
pub use stepper::{SimConfig, StemState};

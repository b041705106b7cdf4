//! Hele-Shaw flow with linear drift: a monotone finite-volume discretization,
//! implicit Euler in time and numerical checks of the semigroup properties.

pub mod error;
pub mod evolution;
pub mod geometry;
pub mod graphs;
pub mod io;
pub mod linalg;
pub mod reaction;
pub mod scalar;
pub mod stationary;
pub mod velocity;
pub mod verification;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases for the common case.
pub type Grid = geometry::StructuredGrid<f64>;
pub type Field = geometry::ScalarField<f64>;
pub type Velocity = velocity::VelocityField<f64>;
pub type Reaction = reaction::ReactionTerm<f64>;
pub type Problem = evolution::EvolutionProblem<f64>;
pub type Run = evolution::Trajectory<f64>;

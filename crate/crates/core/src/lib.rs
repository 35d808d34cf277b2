//! Desk-scale numerical laboratory for two-bubble dynamics of three
//! energy-critical radial wave equations: the focusing NLW in dimension six,
//! the radial Yang-Mills equation in dimension four, and k-equivariant wave
//! maps with k >= 3.
//!
//! The crate builds the bubble profiles and their correction profiles,
//! discretizes the linearized operators, evolves the exact equations,
//! extracts modulation parameters, monitors mixed energy-virial functionals,
//! and runs the bisection shooting that selects concentrating two-bubble
//! trajectories.

pub mod ansatz;
pub mod error;
pub mod evolve;
pub mod functionals;
pub mod grid;
pub mod model;
pub mod linop;
pub mod modulation;
pub mod num;
pub mod shooting;
pub mod verify;
pub mod profiles;

pub use error::{Error, Result};
pub use grid::{make_grid, Field, GridKind, RadialGrid, State};
pub use model::{ModelId, ModelSpec};

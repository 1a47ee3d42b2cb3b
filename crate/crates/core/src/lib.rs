//! Solver and verification laboratory for semi-hyperbolic patches of the
//! two-dimensional self-similar nonlinear wave system with a Chaplygin gas:
//! a characteristic-mesh Goursat solver, a degenerate-coordinate march into
//! the near-sonic layer, regularity diagnostics for the sonic curve, and
//! finite-difference certification of the closed-form identities.

pub mod coeffs;
pub mod config;
pub mod error;
pub mod fields;
pub mod goursat;
pub mod diagnostics;
pub mod interp;
pub mod pipeline;
pub mod rtfield;
pub mod state;
pub mod verify;
pub mod wave;

pub use error::{Result, SolverError};

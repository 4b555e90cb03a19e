//! Numerical weak-KAM toolkit on the flat circle.
//!
//! Computes viscosity solutions of contact Hamilton-Jacobi equations
//! H(x, u, Du) = F(x, m) by implicit semi-Lagrangian value iteration,
//! extracts the set of contact fixed points carried by the solution,
//! integrates the associated characteristic ODE system, and searches for
//! mean field game equilibria by damped fixed-point iteration of the
//! best-response map m -> pushforward of invariant measures of H - F(., m).
//!
//! All state lives on a uniform periodic grid over [0, 1). Everything is
//! immutable after construction and free of interior mutability, so values
//! can be shared across threads freely.

pub mod dynamics;
pub mod error;
pub mod grid;
pub mod mather;
pub mod mfg;
pub mod model;
pub mod weak_kam;

pub use error::{KamError, Result};

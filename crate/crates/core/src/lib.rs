//! Curvature of general natural lifted metrics on the tangent bundle of a
//! Riemannian manifold.
//!
//! The crate evaluates, at a point `(x, y)` of `TM`, the lifted metric blocks,
//! their inverse, the Levi-Civita connection and the full curvature tensor in
//! the adapted frame `(δ/δxⁱ, ∂/∂yʲ)`, and checks all of it against an
//! independent finite-difference computation in induced coordinates.

pub mod base;
pub mod connection;
pub mod curvature;
pub mod error;
pub mod lift;
pub mod oracle;
pub mod sampling;
pub mod scalarfn;
#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

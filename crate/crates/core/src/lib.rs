//! crlab: a numerical laboratory for pseudohermitian contact geometry on
//! periodic model manifolds.
//!
//! The crate builds Tanaka-Webster structure data (Reeb field, connection,
//! torsion, scalar curvature) from contact coframes by solving the structure
//! equations pointwise, provides the sub-Laplacian calculus of maps into
//! Riemannian targets, and assembles a fourth-order obstruction operator
//! together with its renormalized energy, a formal boundary-jet recursion,
//! and descent flows toward critical maps. Everything is verified through
//! executable identities: covariance under conformal rescaling, energy
//! invariance, gradient consistency, and operator self-adjointness.

pub mod config;
pub mod error;
pub mod expr;
pub mod extension;
pub mod fields;
pub mod flow;
pub mod grid;
pub mod mapcalc;
pub mod paneitz;
pub mod structure;
pub mod suite;
pub mod target;

pub use error::{Error, Result};

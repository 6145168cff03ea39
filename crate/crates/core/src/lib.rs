//! Numerical laboratory for the Kähler–Ricci flow on S¹-invariant metrics on
//! CP¹.
//!
//! The crate integrates the potential-level flow
//! `∂φ/∂t = log(ω_φ/ω) + φ - h_ω`, evaluates the K-energy, the Ding–Tian
//! functional and `E₁` along it, and checks the inequalities linking them.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod sampling;

pub use error::GeometryError;
pub use geometry::{make_background, BackgroundGeometry, PotentialState, Profile};
pub use grid::{Field, ReducedGrid};

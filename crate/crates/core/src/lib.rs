//! Elliptic grid generation for planar domains with a mixed spline
//! discretization and a Newton-Krylov solver.

pub mod assembly;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mapping;
pub mod multipatch;
pub mod quadrature;
pub mod samples;
pub mod solver;
pub mod splines;

/// A point or vector in the plane.
pub type Vec2 = [f64; 2];

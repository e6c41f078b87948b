//! Numerical laboratory for thermostat flows on surfaces and the X-ray
//! transform on velocity polynomials of degree at most two.
//!
//! The crate provides the sphere-bundle frame calculus, thermostat orbit and
//! Jacobi-field integration, Riccati solutions along orbits, Pestov-type
//! energy identities, and the potential/solenoidal tensor decomposition,
//! each wired to tolerance-checked residual reports.

pub mod config;
pub mod error;
pub mod expr;
pub mod field;
pub mod flow;
pub mod frame;
pub mod geometry;
pub mod grid;
pub mod pestov;
pub mod report;
pub mod riccati;
pub mod smfield;
pub mod tomography;
pub mod util;

pub use error::{Result, ThermoError};
pub use geometry::{Chart, SmPoint, Surface, ThermostatParams};
pub use smfield::SmField;

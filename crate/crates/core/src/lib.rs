//! Multiple-relaxation-time lattice Boltzmann scheme on periodic grids,
//! together with the equivalent-equation machinery used to check what the
//! scheme converges to: Euler dynamics at first order in the time step and
//! Navier-Stokes dynamics with D'Humières viscosities at second order.
//!
//! Module map:
//! - [`lattice`]: velocity sets, periodic grid, moment matrix and `Λ` tensor
//! - [`equilibrium`]: polynomial equilibria, Jacobian and momentum flux
//! - [`scheme`]: collision, streaming and time stepping
//! - [`analysis`]: conservation defect, flux corrections, viscosity report
//! - [`verify`]: refinement studies and shear-wave viscometry

pub mod analysis;
pub mod equilibrium;
pub mod error;
pub mod field;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod scheme;
pub mod verify;

pub use error::{Error, Result};

//! Pseudospectral solver for the 3D hydrostatic primitive equations on a
//! horizontally periodic layer, with a nudging data-assimilation harness:
//! observation operators, the perturbed hydrostatic Stokes operator, two time
//! integrators, runtime inequality monitors, and twin-experiment drivers.

pub mod assimilation;
pub mod domain;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod timestep;
pub mod verify;

pub use error::{CoreError, Result};

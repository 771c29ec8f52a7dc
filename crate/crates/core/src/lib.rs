//! Simulation and reconstruction of multiphoton joint spatial wave functions
//! measured by coincidence wavefront sensing.

pub mod error;
pub mod estimator;
pub mod exec;
pub mod forward;
pub mod io;
pub mod lattice;
pub mod oracle;
pub mod reconstructor;
pub mod states;

pub use error::{CwsError, Result};
pub use lattice::{linear_index, normalize, unravel_index, window_slice, ComplexField, LatticeSpec, PhysicalConstants};

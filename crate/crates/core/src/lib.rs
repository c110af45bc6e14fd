//! Decay of a prepared state into a structured continuum.
//!
//! Friedrichs-type (arrowhead) and Wigner-type (banded random) coupling
//! matrices on an energy lattice, exact propagation, local density of
//! states, and the closed-form theory for power-law band profiles.

pub mod eigen;
pub mod harness;
pub mod error;
pub mod hamiltonian;
pub mod ldos;
pub mod observables;
pub mod propagator;
pub mod quadrature;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};

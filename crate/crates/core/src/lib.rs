//! Radial Vlasov-Poisson linearisation toolkit.
//!
//! The crate builds polytropic shell equilibria around a central point mass,
//! constructs their action-angle geometry, evolves the pure-transport and the
//! fully coupled linearised flows in angle-Fourier space, measures the decay
//! of the gravitational force, and reconstructs the same dynamics through
//! limiting-absorption (Plemelj / resolvent) computations.

pub mod error;
pub mod foliation;
pub mod initial_data;
pub mod linearized;
pub mod numerics;
pub mod resolvent;
pub mod rows;
pub mod action_angle;
pub mod spectral;
pub mod steady_state;
pub mod transport;

pub use error::{Error, Result};

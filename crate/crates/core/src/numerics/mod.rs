//! Shared numerical kernels: quadrature, root finding, orbit integration,
//! interpolation, and decay-rate fitting.

pub mod fit;
pub mod interp;
pub mod ode;
pub mod quad;
pub mod roots;

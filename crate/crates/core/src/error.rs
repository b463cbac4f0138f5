//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The relative potential depth kappa must lie in the single-gap window
    /// (-2^(-2/3) M^2 / (2 L0), 0).
    #[error("kappa = {kappa} violates the single-gap condition: require {lower} < kappa < 0")]
    SingleGapViolation { kappa: f64, lower: f64 },

    #[error("root bracketing failed on [{a}, {b}] for {what}")]
    RootBracket { what: &'static str, a: f64, b: f64 },

    #[error("root iteration for {what} did not converge after {iters} iterations")]
    RootNoConvergence { what: &'static str, iters: usize },

    #[error("quadrature did not reach tolerance {tol} after {nodes} nodes (last change {last_change})")]
    QuadratureNoConvergence { tol: f64, nodes: usize, last_change: f64 },

    #[error("ODE integration failed: {0}")]
    OdeFailure(String),

    #[error("fixed-point iteration did not converge after {iters} iterations (last update {last_update}, contraction estimate {contraction})")]
    FixedPointNoConvergence { iters: usize, last_update: f64, contraction: f64 },

    #[error("degenerate steady state: cutoff energy lies below the bottom of the effective potential")]
    DegenerateState,

    #[error("degenerate orbit: E = {e} does not exceed the minimum energy {e_min} at L = {l}")]
    DegenerateOrbit { e: f64, e_min: f64, l: f64 },

    #[error("point ({what}) outside the supported domain: {detail}")]
    OutsideDomain { what: &'static str, detail: String },

    #[error("Newton iteration for {what} diverged after {iters} iterations (residual {residual})")]
    NewtonDivergence { what: &'static str, iters: usize, residual: f64 },

    #[error("foliation Jacobian lost positivity at R = {r}, E = {e}, L = {l} (value {value}); eta is too large for the frequency foliation")]
    FoliationNotMonotone { r: f64, e: f64, l: f64, value: f64 },

    #[error("time step {dt} violates the stability bound {max_dt} for mode cutoff {m_max}")]
    CflViolation { dt: f64, max_dt: f64, m_max: usize },

    #[error("Neumann iteration is not a contraction: measured factor {factor} at lambda = {lambda} (eta = {eta})")]
    ContractionFailure { factor: f64, lambda: f64, eta: f64 },

    #[error("orthogonality violation: mean-in-angle content {magnitude} exceeds tolerance {tol}")]
    Orthogonality { magnitude: f64, tol: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

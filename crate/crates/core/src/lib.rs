//! Fourier spectral solver for dispersive PDEs on a periodic interval,
//! with artificial damping that emulates open (whole-line) boundaries.
//!
//! The solver represents a field on `[-L, L]` by its Fourier coefficients,
//! advances them with an integrating-factor RK4 scheme, and suppresses
//! wrap-around re-entry with two damping mechanisms: a variable-coefficient
//! heat equation applied by Strang splitting, and a periodic multiplicative
//! decay mask. A small analysis module quantifies, for the linearized KdV
//! equation, how large the periodic domain must be for the computed solution
//! to track the whole-line solution, and what the damping buys.

pub mod antiderivative;
pub mod damping;
pub mod evolution;
pub mod harness;
pub mod ic;
pub mod linkdv;
pub mod models;
pub mod spectral;

pub use num_complex::Complex64;

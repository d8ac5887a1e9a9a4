//! Nonisentropic thermoelastic contact discontinuities: hyperbolic structure,
//! jump conditions, the straightened free-boundary problem, its effective
//! linearization, stability constants, and a finite-difference solver with
//! energy diagnostics.

pub mod cli;
pub mod constitutive;
pub mod error;
pub mod grid;
pub mod hyperbolic;
pub mod interface;
pub mod linearized;
pub mod solver;
pub mod stability;
pub mod straightening;

pub use error::{Error, Result};

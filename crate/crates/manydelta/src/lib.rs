//! Simulation and verification toolkit for the singular-drift diffusions of
//! planar N-particle systems with pairwise contact interactions.
//!
//! The library simulates the many-δ and one-δ motions (independent planar
//! Brownian particles with a drift given by the gradient of the log of a
//! weighted sum of K0 terms), evaluates the change-of-measure functionals
//! along paths, and numerically verifies the identities linking the
//! Brownian, one-δ and many-δ descriptions: Girsanov cross-law equalities,
//! the supermartingale normalization, no-simultaneous-contact statistics,
//! Itô-decomposition residuals, and deterministic kernel limits.

pub mod error;
pub mod localtime;
pub mod mc;
pub mod measures;
pub mod model;
pub mod ntc;
pub mod sde;
pub mod specfun;

pub mod cli;

pub use error::{Error, Result};

//! Numerical laboratory for the inviscid limit of 2D incompressible flow.
//!
//! - [`field`]: periodic grids, spectral transforms, Biot–Savart, norms and
//!   initial data.
//! - [`evolve`]: pseudo-spectral Navier–Stokes / Euler vorticity integration.
//! - [`transport`]: Wasserstein distances, sign splitting and the
//!   Kantorovich–Rubinstein dual.
//! - [`coupling`]: paired-particle estimate of the coupling cost `Q(t)`.
//! - [`osgood`]: the log-Lipschitz differential inequality and rate formulas.

pub mod error;
pub mod evolve;
pub mod coupling;
pub mod field;
pub mod osgood;
pub mod transport;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

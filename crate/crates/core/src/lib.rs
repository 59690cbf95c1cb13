//! Grid-based quantum dynamics for closed systems.
//!
//! One-dimensional DVR/FBR grids (plane-wave, Gauss-Hermite, Gauss-Legendre)
//! are combined into direct-product grids on which Hamiltonians with coupled
//! channels, dipole coupling to pulsed fields and absorbing boundaries are
//! assembled. Time-dependent problems are solved with second-order
//! differencing, operator splitting or Chebychev expansions; bound states with
//! explicit matrix diagonalization or imaginary-time relaxation.

pub mod cli;
pub mod error;
pub mod grids;
pub mod linalg;
pub mod observe;
pub mod operators;
pub mod propagators;
pub mod special;
pub mod stationary;
pub mod system;

pub use error::{Error, Result};
pub use grids::{Grid1D, GridKind, ProductGrid};
pub use system::{SystemSpec, WaveFunction};
pub use num_complex::Complex64 as C64;

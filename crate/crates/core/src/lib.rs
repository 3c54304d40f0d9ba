//! Wave propagation and boundary-flux verification on n-dimensional simplices.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: simplices, faces, the affine map to the standard simplex and
//!   volume/determinant identities.
//! - [`quadrature`]: Gauss-Legendre rules and collapsed (Duffy) rules on simplices.
//! - [`opalgebra`]: exact rational algebra of polynomial-coefficient differential
//!   operators, used to machine-check `[P, X] = 2P`.
//! - [`discretization`]: Freudenthal refinement and P1 mass/stiffness assembly.
//! - [`solver`]: leapfrog time stepping of `M u'' = -S u` with energy ledgers.
//! - [`observability`]: face flux measurement, predicted flux and remainder fits.
//! - [`oracles`]: exact Dirichlet eigenmodes on order-simplices.

pub mod discretization;
pub mod error;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod observability;
pub mod opalgebra;
pub mod oracles;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{Face, Simplex};

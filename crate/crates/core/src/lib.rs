//! Steady-state sideband cooling of trapped atoms coupled by free-space
//! photon-mediated dipole-dipole interactions.
//!
//! The crate builds the Lamb-Dicke master equation for a laser-driven target
//! atom surrounded by undriven spectator atoms, solves for its steady state,
//! and compares the target's phonon occupation with that of an isolated atom.


// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod hilbert;
pub mod liouvillian;
pub mod steady;

pub use error::{Error, ErrorCategory, Result};
pub use geometry::{AtomConfiguration, CouplingMatrices};
pub use hilbert::{HilbertLayout, SparseMatrix};
pub use liouvillian::{ModelParams, Superoperator};
pub use steady::{DensityMatrix, SteadyResult};

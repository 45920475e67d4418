//! Classical and semiclassical scattering on surfaces of revolution with two
//! cylindrical ends.
//!
//! The crate covers the classical scattering map between reference
//! sections, the per-mode quantum scattering matrix (stationary and
//! time-dependent routes), coherent-state phase space tools, eigenphase
//! statistics and a weighted 1D resolvent estimate.

// `!(x > 0.0)` also rejects NaN; 2x2 blocks read best with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channels;
pub mod classical_flow;
pub mod error;
pub mod geometry;
pub mod par;
pub mod phasespace;
pub mod propagator;
pub mod quadrature;
pub mod resolvent1d;
pub mod spectral_stats;

pub use error::{Error, Result};
pub use geometry::{End, ModelSpec, PotentialSpec, Profile, ProfileKind};

//! Simulation, estimation and bound analysis for single-antenna positioning
//! aided by a legitimate reconfigurable intelligent surface (RIS) while an
//! unauthorized RIS injects an unmodelled third propagation path.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: rotations, direction vectors, path delays.
//! - [`channel`]: steering vectors, path gains, OFDM observation synthesis.
//! - [`codebooks`]: legitimate time-orthogonal and unauthorized RIS codebooks.
//! - [`rx`]: sum/difference combining of the time-orthogonal profile.
//! - [`estimator`]: low-complexity channel and position estimation followed by
//!   mismatched maximum-likelihood refinement.
//! - [`bounds`]: CRB, pseudo-true parameters, MCRB/MLB and the absolute
//!   position bound.
//! - [`harness`]: scenario configuration, Monte Carlo sweeps, heatmaps, CDFs,
//!   CSV output and the command line front-end.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod codebooks;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harness;
pub mod lowrank;
pub mod optim;
pub mod params;
pub mod rx;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

pub use num_complex::Complex64;

//! Spectral statistics of Wigner matrices: sampling, eigenvalue counting, small-gap
//! probabilities, resolvent identities, inverse moments and local universality checks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod invmom;
pub mod oracle;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod schur;
pub mod spectral;
pub mod stats;
pub mod trials;
pub mod universality;
pub mod wegner;

pub use error::{LabError, Result};

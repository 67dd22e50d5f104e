//! Excited random walks driven by Markovian cookie stacks, the
//! branching-like processes that encode their edge local times, parameter
//! estimation for the limiting diffusions, and simulators for squared Bessel
//! processes and Brownian motion perturbed at its extrema.
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod blp;
pub mod bmpe_besq;
pub mod cookie_model;
pub mod erw;
pub mod error;
pub mod params;
pub mod quadrature;
pub mod rng;
pub mod runner;
pub mod sites;
pub mod stats;

pub use error::{Error, Result};

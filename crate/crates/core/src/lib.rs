//! Privacy-preserving average consensus with Shamir secret sharing over the
//! reals.
//!
//! Each node splits its state into shares evaluated at the points of a common
//! key sequence, runs one consensus iteration per channel, and recovers its
//! state by Lagrange interpolation at zero. Adversaries that observe fewer
//! shares than the node's security degree learn nothing about the state.

pub mod cli;
pub mod config;
pub mod error;
pub mod graph;
pub mod keydist;
pub mod protocol;
mod rng;
pub mod shamir;
pub mod simnet;

pub use error::{Error, Result};
pub use rng::{derive_seed, stream};

//! Communication-rate limits of phase-insensitive bosonic Gaussian
//! multiple-access channels (BGMACs).
//!
//! The crate covers the covariance-matrix calculus of Gaussian states
//! ([`gaussian`]), the channel model ([`channel`]), closed-form capacities and
//! outer bounds ([`capacity`]), one-shot Gaussian rate regions and their
//! optimization ([`region`]), causal memory channels ([`memory`]) and a
//! truncated Fock-space cross-check ([`fock`]). All rates are in bits per
//! channel use.

pub mod capacity;
pub mod channel;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod memory;
pub mod optim;
pub mod region;

pub use error::{Error, Result};
